use std::io::{Read, Write};
use std::net::TcpListener;
use std::time::Duration;

use qta_core::backends::{
    sample_simulated_annealing, solve_qbsolv_like, solve_remote, AnnealSchedule, Backend,
    BackendError, BackendRequest, ExactBackend, LoopbackServer, QbsolvConfig, RemoteBackend,
    SimulatedAnnealing,
};
use qta_core::engine::{solve_cluster_cached, Budget, EngineError, SolveOptions, TabuDictionary};
use qta_core::fixtures::random_instance;
use qta_core::qubo::{build_atsp_qubo, decode, Qubo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn exhaustive_minimum(qubo: &Qubo) -> f64 {
    let n = qubo.n_vars();
    let terms: Vec<(usize, usize, f64)> = qubo.entries().collect();
    (0..(1u64 << n))
        .map(|mask| {
            terms
                .iter()
                .filter(|&&(i, j, _)| mask >> i & 1 == 1 && mask >> j & 1 == 1)
                .map(|&(_, _, c)| c)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_qubo(n: usize, seed: u64) -> Qubo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Qubo::new(n);
    for i in 0..n {
        q.add(i, i, rng.gen_range(-10..=10) as f64);
        for j in (i + 1)..n {
            if rng.gen_bool(0.5) {
                q.add(i, j, rng.gen_range(-10..=10) as f64);
            }
        }
    }
    q
}

#[test]
fn annealer_finds_the_four_node_minimum_in_most_repetitions() {
    let inst = random_instance(8, 31, 1, 100);
    let matrix = build_atsp_qubo(&inst, &[1, 3, 4, 6], None, 10).unwrap();
    let target = exhaustive_minimum(matrix.qubo());
    let schedule = AnnealSchedule::for_qubo(matrix.qubo(), 1000);
    let hits = (0..50u64)
        .filter(|&seed| {
            let req = BackendRequest::new(matrix.qubo().clone(), 50, Some(seed));
            let resp = sample_simulated_annealing(&req, &schedule).unwrap();
            resp.best().unwrap().energy == target
        })
        .count();
    assert!(hits >= 45, "only {hits}/50 repetitions reached {target}");
}

#[test]
fn annealer_is_deterministic_and_energies_are_exact() {
    let inst = random_instance(10, 2, 1, 300);
    let matrix = build_atsp_qubo(&inst, &[0, 2, 4, 6, 8, 9], None, 10).unwrap();
    let req = BackendRequest::new(matrix.qubo().clone(), 20, Some(99));
    let sa = SimulatedAnnealing::default();
    let a = sa.sample(&req).unwrap();
    let b = sa.sample(&req).unwrap();
    assert_eq!(a.samples, b.samples);
    for s in &a.samples {
        assert_eq!(s.energy, matrix.qubo().energy(&s.bits));
    }
    assert!(a.samples.windows(2).all(|w| w[0].energy <= w[1].energy));
}

#[test]
fn two_node_cluster_decodes_to_the_forced_cycle() {
    let inst = random_instance(5, 8, 1, 50);
    let matrix = build_atsp_qubo(&inst, &[1, 3], None, 10).unwrap();
    for seed in 0..5 {
        let req = BackendRequest::new(matrix.qubo().clone(), 10, Some(seed));
        let resp = SimulatedAnnealing::default().sample(&req).unwrap();
        let tour = decode(&matrix, &inst, &resp.best().unwrap().bits).unwrap().tour().unwrap();
        assert_eq!(tour.nodes(), &[1, 3]);
        assert_eq!(tour.cost(), inst.cost(1, 3) + inst.cost(3, 1));
    }
}

#[test]
fn exact_backend_energies_match_evaluation() {
    let inst = random_instance(9, 4, 0, 500);
    let cluster: Vec<usize> = (0..9).collect();
    let matrix = build_atsp_qubo(&inst, &cluster, None, 10).unwrap();
    let req = BackendRequest::new(matrix.qubo().clone(), 3, Some(1)).with_permutation_side(9);
    let resp = ExactBackend.sample(&req).unwrap();
    let best = resp.best().unwrap();
    assert_eq!(best.energy, matrix.qubo().energy(&best.bits));
    let tour = decode(&matrix, &inst, &best.bits).unwrap().tour().unwrap();
    let hk = qta_core::backends::solve_exact_heldkarp(&inst, &cluster).unwrap();
    assert_eq!(tour.cost(), hk.cost());
}

#[test]
fn decomposing_baseline_reaches_small_global_minima() {
    let hits = (0..20u64)
        .filter(|&seed| {
            let n = 12 + (seed as usize % 5);
            let qubo = random_qubo(n, 1000 + seed);
            let config = QbsolvConfig {
                subqubo_size: 8,
                seed,
                ..QbsolvConfig::default()
            };
            let out = solve_qbsolv_like(&qubo, None, &config, &SimulatedAnnealing::default()).unwrap();
            assert_eq!(out.energy, qubo.energy(&out.bits));
            assert!(out.backend_calls > 0);
            out.energy == exhaustive_minimum(&qubo)
        })
        .count();
    assert!(hits >= 18, "only {hits}/20 seeds reached the global minimum");
}

#[test]
fn decomposing_baseline_improves_a_random_tour() {
    let inst = random_instance(6, 12, 1, 200);
    let cluster: Vec<usize> = (0..6).collect();
    let matrix = build_atsp_qubo(&inst, &cluster, None, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut order = cluster.clone();
    rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
    let start_cost = qta_core::tour_cost(&inst, &order).unwrap();
    let config = QbsolvConfig {
        subqubo_size: 36,
        ..QbsolvConfig::default()
    };
    let out = solve_qbsolv_like(
        matrix.qubo(),
        Some(matrix.encode(&order)),
        &config,
        &SimulatedAnnealing::default(),
    )
    .unwrap();
    let tour = decode(&matrix, &inst, &out.bits).unwrap().tour().expect("feasible");
    assert!(tour.cost() <= start_cost);
}

#[test]
fn loopback_server_matches_local_annealing() {
    let server = LoopbackServer::start("127.0.0.1:0", "secret", SimulatedAnnealing::default(), 2).unwrap();
    let inst = random_instance(7, 6, 1, 80);
    let matrix = build_atsp_qubo(&inst, &[0, 1, 2, 3, 4], None, 10).unwrap();
    let req = BackendRequest::new(matrix.qubo().clone(), 15, Some(2024));
    let remote = solve_remote(&req, &server.url(), "secret").unwrap();
    let local = SimulatedAnnealing::default().sample(&req).unwrap();
    assert_eq!(remote.samples, local.samples);
    assert_eq!(remote.backend_name, "remote");
}

#[test]
fn loopback_server_handles_concurrent_clients() {
    let server = LoopbackServer::start("127.0.0.1:0", "t", SimulatedAnnealing::with_sweeps(200), 3).unwrap();
    let url = server.url();
    let qubo = random_qubo(10, 3);
    let handles: Vec<_> = (0..4u64)
        .map(|seed| {
            let url = url.clone();
            let qubo = qubo.clone();
            std::thread::spawn(move || {
                let req = BackendRequest::new(qubo, 5, Some(seed));
                let remote = solve_remote(&req, &url, "t").unwrap();
                let local = SimulatedAnnealing::with_sweeps(200).sample(&req).unwrap();
                remote.samples == local.samples
            })
        })
        .collect();
    for h in handles {
        assert!(h.join().unwrap());
    }
}

#[test]
fn wrong_token_is_rejected() {
    let server = LoopbackServer::start("127.0.0.1:0", "right", SimulatedAnnealing::default(), 1).unwrap();
    let req = BackendRequest::new(random_qubo(4, 1), 2, Some(1));
    match solve_remote(&req, &server.url(), "wrong") {
        Err(BackendError::AuthRejected(code)) => assert_eq!(code, 401),
        other => panic!("expected AuthRejected, got {other:?}"),
    }
}

#[test]
fn unreachable_endpoint_fails_without_spending_budget() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let backend = RemoteBackend::with_timeout(format!("http://127.0.0.1:{port}/sample"), "x", Duration::from_secs(5));
    let inst = random_instance(6, 1, 1, 20);
    let mut tabu = TabuDictionary::new();
    let mut budget = Budget::new(40);
    let err = solve_cluster_cached(&inst, &[0, 1, 2], &backend, &mut tabu, &mut budget, &SolveOptions::default())
        .unwrap_err();
    assert!(matches!(err, EngineError::Backend(BackendError::ConnectionFailed(_))), "{err:?}");
    assert_eq!(budget.used(), 0);
    assert!(tabu.is_empty());
}

fn serve_once(body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut buf = [0u8; 65536];
        let mut got = Vec::new();
        // read the header block and the declared body before answering
        loop {
            let k = stream.read(&mut buf).unwrap();
            got.extend_from_slice(&buf[..k]);
            let text = String::from_utf8_lossy(&got);
            if let Some(end) = text.find("\r\n\r\n") {
                let len = text[..end]
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                    .unwrap_or(0);
                if got.len() >= end + 4 + len {
                    break;
                }
            }
            if k == 0 {
                break;
            }
        }
        let reply = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(reply.as_bytes()).unwrap();
    });
    format!("http://{addr}/sample")
}

#[test]
fn malformed_body_is_reported() {
    let req = BackendRequest::new(random_qubo(4, 2), 2, Some(1));
    for body in ["{not json", r#"{"samples": [{"bits": "01", "energy": 0.0}]}"#, r#"{"samples": []}"#] {
        let url = serve_once(body);
        match solve_remote(&req, &url, "t") {
            Err(BackendError::MalformedResponse(_)) => {}
            other => panic!("{body}: expected MalformedResponse, got {other:?}"),
        }
    }
}
