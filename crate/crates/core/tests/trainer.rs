use idr_core::data::{generate_synthetic, LoadDataset, SyntheticProfileConfig};
use idr_core::domain::{default_appliance_table, TimeGrid};
use idr_core::dqn::{AgentCheckpoint, DqnConfig, QNetwork};
use idr_core::environment::{EpisodeConfig, Environment};
use idr_core::trainer::{run_policy_eval, run_training, write_learning_curve, Agents, TrainingOptions};

fn env(households: usize, days: usize) -> Environment {
    let table = default_appliance_table();
    let data: LoadDataset = generate_synthetic(
        &SyntheticProfileConfig {
            households,
            days,
            seed: 11,
            ..SyntheticProfileConfig::default()
        },
        &table,
        TimeGrid::default(),
    )
    .unwrap();
    Environment::new(EpisodeConfig::default(), &table, data, 11).unwrap()
}

fn options(episodes: u64) -> TrainingOptions {
    TrainingOptions {
        dqn: DqnConfig {
            hidden_layers: vec![16, 16],
            buffer_capacity: 2000,
            ..DqnConfig::default()
        },
        episodes,
        train_days: 1..4,
        seed: 3,
        max_steps: None,
        checkpoint_dir: None,
        checkpoint_every: 0,
        config_hash: "test".into(),
    }
}

#[test]
fn zero_episodes_is_a_no_op() {
    let env = env(2, 4);
    let out = run_training(&env, &options(0)).unwrap();
    assert!(out.curve.is_empty());
    let fresh = Agents::new(&env, &options(0).dqn, 3).unwrap();
    assert_eq!(out.agents.aggregator.online(), fresh.aggregator.online());
    let mut csv = Vec::new();
    write_learning_curve(&out.curve, &mut csv).unwrap();
    assert_eq!(
        String::from_utf8(csv).unwrap(),
        "episode,epsilon,mean_r_AA,mean_r_PA,surplus_kwh,incentive_cents\n"
    );
}

#[test]
fn same_seed_gives_identical_runs() {
    let env = env(2, 4);
    let a = run_training(&env, &options(3)).unwrap();
    let b = run_training(&env, &options(3)).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.agents.aggregator.checkpoint().encode(), b.agents.aggregator.checkpoint().encode());
    let mut other = options(3);
    other.seed = 4;
    assert_ne!(run_training(&env, &other).unwrap().curve, a.curve);
}

#[test]
fn agents_keep_separate_buffers() {
    let env = env(3, 4);
    let out = run_training(&env, &options(1)).unwrap();
    let n_in_aa = env.aggregator_input_len();
    assert!(out.agents.aggregator.buffer().iter().all(|t| t.obs.len() == n_in_aa && t.action < 11));
    for agent in &out.agents.participants {
        assert_eq!(agent.buffer().len(), 96);
        assert_eq!(agent.buffer().iter().filter(|t| t.terminal).count(), 1);
    }
    // distinct households observe distinct states
    let first: Vec<_> = out.agents.participants.iter().map(|a| a.buffer().iter().map(|t| t.obs.clone()).collect::<Vec<_>>()).collect();
    assert_ne!(first[0], first[1]);
}

#[test]
fn step_cap_stops_training() {
    let env = env(2, 4);
    let mut opts = options(5);
    opts.max_steps = Some(96 * 2);
    assert_eq!(run_training(&env, &opts).unwrap().curve.len(), 2);
}

#[test]
fn zero_networks_take_the_first_actions() {
    let env = env(2, 3);
    let mut agents = Agents::new(&env, &options(0).dqn, 0).unwrap();
    let zero = |net: &QNetwork| QNetwork::zeros(&net.sizes()).unwrap();
    let zero_agent = |a: &idr_core::dqn::DqnAgent| {
        let mut ck = a.checkpoint();
        ck.online = zero(&ck.online);
        ck.target = zero(&ck.target);
        idr_core::dqn::DqnAgent::from_checkpoint(&options(0).dqn, ck).unwrap()
    };
    agents.aggregator = zero_agent(&agents.aggregator);
    agents.participants = agents.participants.iter().map(zero_agent).collect();
    let traces = run_policy_eval(&env, &agents, 1..3).unwrap();
    for s in traces.iter().flat_map(|t| &t.steps) {
        assert_eq!(s.incentive, 0.0);
        assert!(s.households.iter().all(|h| h.rate == 0.0));
    }
    assert_eq!(traces, run_policy_eval(&env, &agents, 1..3).unwrap());
}

#[test]
fn checkpoints_round_trip_through_disk() {
    let env = env(2, 4);
    let dir = tempfile::tempdir().unwrap();
    let mut opts = options(2);
    opts.checkpoint_dir = Some(dir.path().to_path_buf());
    opts.checkpoint_every = 1;
    let out = run_training(&env, &opts).unwrap();
    let (loaded, manifest) = Agents::load(dir.path(), &env, &opts.dqn).unwrap();
    assert_eq!(manifest.episodes_completed, 2);
    assert_eq!(manifest.dataset_fingerprint, env.dataset().fingerprint());
    assert_eq!(manifest.config_hash, "test");
    let a = run_policy_eval(&env, &out.agents, 2..4).unwrap();
    let b = run_policy_eval(&env, &loaded, 2..4).unwrap();
    assert_eq!(a, b);

    // a shape mismatch is a configuration error
    let wrong = DqnConfig {
        hidden_layers: vec![8],
        ..opts.dqn.clone()
    };
    let err = Agents::load(dir.path(), &env, &wrong).unwrap_err();
    assert_eq!(err.class(), idr_core::ErrorClass::Config);
    // so is a missing directory
    assert!(Agents::load(&dir.path().join("nope"), &env, &opts.dqn).is_err());
    assert!(AgentCheckpoint::load(&dir.path().join("aggregator.ckpt")).is_ok());
}

#[test]
fn training_range_outside_dataset_is_data_error() {
    let env = env(1, 3);
    let mut opts = options(1);
    opts.train_days = 2..9;
    assert_eq!(run_training(&env, &opts).unwrap_err().class(), idr_core::ErrorClass::Data);
}
