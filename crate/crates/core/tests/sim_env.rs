use gvqa_core::advantage::{self, AdvantageMode};
use gvqa_core::inference;
use gvqa_core::planner::ZoomPlanner;
use gvqa_core::response;
use gvqa_core::reward::RewardEngine;
use gvqa_core::sim::{self, ClientMode, RolloutKind, ScriptedClient};

#[test]
fn thousand_episodes_satisfy_their_invariants() {
    for seed in 0..1000 {
        let ep = sim::generate_episode(seed, (60.0, 600.0), 3).unwrap();
        ep.validate().unwrap();
        assert_eq!(ep, sim::generate_episode(seed, (60.0, 600.0), 3).unwrap());
        let spans: Vec<_> = ep.events.iter().map(|e| e.span).collect();
        assert!(spans.windows(2).all(|w| w[0].end <= w[1].start), "seed {seed}");
        assert_eq!(ep.gt_spans.intervals(), &[ep.target().span]);
        assert_eq!(ep.options[&ep.answer], ep.target().detail);
    }
}

#[test]
fn single_event_is_the_target() {
    let ep = sim::generate_episode(4, (30.0, 40.0), 1).unwrap();
    assert_eq!(ep.events.len(), 1);
    assert_eq!(ep.gt_spans.intervals(), &[ep.events[0].span]);
}

#[test]
fn oracle_groups_have_zero_advantages() {
    let ep = sim::generate_episode(9, (60.0, 600.0), 3).unwrap();
    let client = ScriptedClient::oracle([ep.clone()]);
    let engine = RewardEngine::new(&client, ZoomPlanner::default());
    let group = sim::scripted_rollout_group(&ep, 8, ClientMode::Oracle, 0).unwrap();
    let rewards = engine.score_group(&group, &ep.ground_truth()).unwrap();
    for mode in [AdvantageMode::TokenAdv, AdvantageMode::Summed] {
        let ga = advantage::normalize_per_reward(&rewards, mode, advantage::DEFAULT_EPS).unwrap();
        assert!(ga.summed.iter().chain(&ga.iou).chain(&ga.acc).all(|a| *a == 0.0));
    }
}

#[test]
fn adversarial_groups_contain_a_malformed_rollout() {
    let ep = sim::generate_episode(10, (60.0, 600.0), 3).unwrap();
    let client = ScriptedClient::oracle([ep.clone()]);
    let engine = RewardEngine::new(&client, ZoomPlanner::default());
    let group = sim::scripted_rollout_group(&ep, 8, ClientMode::Adversarial, 3).unwrap();
    let rewards = engine.score_group(&group, &ep.ground_truth()).unwrap();
    assert!(rewards.iter().any(|r| r.format == 0.0));
    assert!(rewards.iter().any(|r| r.format == 1.0));
}

#[test]
fn shifted_rollout_has_iou_one_third() {
    for seed in 0..50 {
        let ep = sim::generate_episode(seed, (60.0, 600.0), 3).unwrap();
        let client = ScriptedClient::oracle([ep.clone()]);
        let engine = RewardEngine::new(&client, ZoomPlanner::default());
        let text = sim::scripted_rollout(&ep, RolloutKind::Shifted).text;
        let r = engine.score_text(&text, &ep.ground_truth()).unwrap();
        assert!((r.iou - 1.0 / 3.0).abs() < 1e-9, "seed {seed}: {}", r.iou);
    }
}

#[test]
fn non_adversarial_text_parses() {
    for seed in 0..100 {
        let ep = sim::generate_episode(seed, (60.0, 600.0), 3).unwrap();
        let letters = ep.ground_truth().option_letters().iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let letters: Vec<&str> = letters.iter().map(String::as_str).collect();
        for mode in [ClientMode::Oracle, ClientMode::Noisy(0.3)] {
            let group = sim::scripted_rollout_group(&ep, 6, mode, seed).unwrap();
            for r in &group.rollouts {
                let malformed = !r.text.trim_end().ends_with("</glue>");
                assert_eq!(response::parse_response(&r.text, &letters).is_ok(), !malformed, "{}", r.text);
            }
        }
    }
}

#[test]
fn coarse_pass_alone_misses_the_detail() {
    let planner = ZoomPlanner::default();
    for seed in 0..100 {
        let ep = sim::generate_episode(seed, (60.0, 600.0), 3).unwrap();
        let client = ScriptedClient::oracle([ep.clone()]);
        let out = inference::coarse_to_fine(&ep.ground_truth(), &client, &planner).unwrap();
        assert!(out.coarse_plan.tokens_per_frame < ep.detail_threshold);
        assert_eq!(out.final_answer.as_deref(), Some(ep.answer.as_str()));
    }
}
