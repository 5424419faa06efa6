//! Module invariants over fuzzed scenarios, checked stage by stage against
//! oracles computed here from the scenario and the emitted events.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use splitsim::harness::policy::environment;
use splitsim::harness::{generate, Construction, FuzzParams, Scenario};
use splitsim::model::{in_cone, Snapshot};
use splitsim::robinson::PPolicy;
use splitsim::{
    build_change_set, evaluate, pair, restrict, ApproxTable, BitString, BlockId, Engine,
    EnumerationSchedule, GuessingRegistry, Outcome, ReqId, RobinsonStrategy, Role, SacksStrategy,
    Side, Strategy as ConstructionStrategy, Trace, TraceEvent, World,
};

/// A run observed after every stage.
struct Observed {
    sc: Scenario,
    trace: Trace,
    /// `lambda[s + 1]` is `λ_s`; `lambda[0]` is the initial assignment.
    lambda: Vec<Vec<u64>>,
    mu: Vec<Vec<u64>>,
    a: [Vec<(u64, u64)>; 2],
    d: Vec<(u64, u64)>,
}

fn step<S: ConstructionStrategy>(sc: Scenario, mut engine: Engine<S>) -> Observed {
    let h = sc.horizon;
    let width = 2 * h + 2;
    let snap = |w: &World, side| (0..width).map(|e| w.assignment.block_of(side, e)).collect();
    let mut lambda = vec![snap(&engine.world, Side::Zero)];
    let mut mu = vec![snap(&engine.world, Side::One)];
    for s in 0..=h {
        engine.run_stage(s).expect("stage runs");
        lambda.push(snap(&engine.world, Side::Zero));
        mu.push(snap(&engine.world, Side::One));
    }
    let w = engine.world;
    Observed {
        sc,
        trace: w.trace,
        lambda,
        mu,
        a: [w.a0.entries().to_vec(), w.a1.entries().to_vec()],
        d: w.d.entries().to_vec(),
    }
}

fn observe(sc: Scenario) -> Observed {
    let env = environment(&sc.d);
    match sc.construction {
        Construction::Sacks => {
            let world = World::new(sc.horizon, &sc.b, &EnumerationSchedule::new(Role::C));
            let strategy = SacksStrategy::new(sc.functionals.clone());
            step(sc, Engine::new(world, strategy, env))
        }
        Construction::Robinson => {
            let world = World::new(sc.horizon, &sc.b, &sc.c);
            let registry =
                GuessingRegistry::new(sc.p_policy.clone(), sc.q_default, sc.q_overrides.clone());
            let strategy = RobinsonStrategy::new(sc.functionals.clone(), registry);
            step(sc, Engine::new(world, strategy, env))
        }
    }
}

fn members_at(entries: &[(u64, u64)], s: u64) -> BTreeSet<u64> {
    entries
        .iter()
        .filter(|&&(t, _)| t <= s)
        .map(|&(_, x)| x)
        .collect()
}

fn snapshot_of(entries: &[(u64, u64)], s: u64) -> Snapshot {
    Snapshot {
        stage: s,
        members: members_at(entries, s),
    }
}

impl Observed {
    /// Priority order of the block holding `req` when stage `s` begins.
    fn order_at(&self, req: ReqId, s: u64) -> u64 {
        let row = match req.side {
            Side::Zero => &self.lambda[s as usize],
            Side::One => &self.mu[s as usize],
        };
        BlockId {
            side: req.side,
            index: row[req.e as usize],
        }
        .order()
    }

    /// Whether `ev` (an initialize event) initializes `req`.
    fn initializes(&self, ev: &TraceEvent, req: ReqId) -> bool {
        let block: BlockId = ev.get_parsed("block").expect("block");
        block.order() <= self.order_at(req, ev.stage)
    }

    fn events(&self, kind: &str) -> impl Iterator<Item = &TraceEvent> + '_ {
        let kind = kind.to_string();
        self.trace.iter().filter(move |e| e.kind.as_str() == kind)
    }

    fn c_at(&self, s: u64) -> Snapshot {
        let entries: Vec<_> = self.sc.c.entries().collect();
        snapshot_of(&entries, s)
    }
}

fn scenario(construction: Construction, seed: u64, index: u64) -> Scenario {
    let mut params = FuzzParams::new(construction);
    params.max_horizon = 160;
    generate(seed, index, &params)
}

fn any_scenario() -> impl Strategy<Value = Scenario> {
    (any::<bool>(), any::<u64>(), 0u64..1 << 20).prop_map(|(r, seed, index)| {
        let c = if r {
            Construction::Robinson
        } else {
            Construction::Sacks
        };
        scenario(c, seed, index)
    })
}

fn robinson_scenario() -> impl Strategy<Value = Scenario> {
    (any::<u64>(), 0u64..1 << 20)
        .prop_map(|(seed, index)| scenario(Construction::Robinson, seed, index))
}

fn sacks_scenario() -> impl Strategy<Value = Scenario> {
    (any::<u64>(), 0u64..1 << 20)
        .prop_map(|(seed, index)| scenario(Construction::Sacks, seed, index))
}

/// `p(j, t)` computed from the `W` enumerations in the trace.
fn p_oracle(ob: &Observed, w: &[(u64, BitString)], j: u64, t: u64) -> bool {
    match &ob.sc.p_policy {
        PPolicy::TruthfulDelay { delay } => {
            t >= *delay && {
                let c = ob.c_at(t - delay);
                w.iter().any(|(at, s)| *at <= t - delay && in_cone(s, &c))
            }
        }
        PPolicy::Table { values } => values
            .get(&j)
            .and_then(|row| row.get((t as usize).min(row.len().saturating_sub(1))))
            .copied()
            .unwrap_or(false),
    }
}

fn guessing_sets(ob: &Observed) -> BTreeMap<u64, Vec<(u64, BitString)>> {
    let mut out: BTreeMap<u64, Vec<(u64, BitString)>> = BTreeMap::new();
    for ev in ob.events("enumerate").filter(|e| e.get("set") == Some("W")) {
        out.entry(ev.get_u64("j").unwrap())
            .or_default()
            .push((ev.stage, ev.get_parsed("sigma").unwrap()));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sides_partition_b(sc in any_scenario()) {
        let ob = observe(sc);
        let b: Vec<_> = ob.sc.b.entries().collect();
        for s in 0..=ob.sc.horizon {
            let a0 = members_at(&ob.a[0], s);
            let a1 = members_at(&ob.a[1], s);
            prop_assert!(a0.is_disjoint(&a1), "stage {}", s);
            let union: BTreeSet<u64> = a0.union(&a1).copied().collect();
            prop_assert_eq!(union, members_at(&b, s), "stage {}", s);
        }
    }

    #[test]
    fn assignment_never_moves_up(sc in any_scenario()) {
        let ob = observe(sc);
        for (rows, name) in [(&ob.lambda, "λ"), (&ob.mu, "μ")] {
            for (e, &b) in rows[0].iter().enumerate() {
                prop_assert_eq!(b, e as u64, "{}_0 is not the identity", name);
            }
            for (s, pair) in rows.windows(2).enumerate() {
                for (e, (before, after)) in pair[0].iter().zip(&pair[1]).enumerate() {
                    prop_assert!(after <= before, "{}(e={}) rose at stage {}", name, e, s);
                }
            }
        }
    }

    #[test]
    fn restraints_keep_small_elements_out(sc in any_scenario()) {
        let ob = observe(sc);
        let mut held: BTreeMap<BlockId, u64> = BTreeMap::new();
        // Entries below a restraint this stage; excused if the block is
        // initialized before the stage ends.
        let mut breaches: Vec<(BlockId, u64, u64)> = Vec::new();
        let mut stage = 0;
        for ev in ob.trace.iter() {
            if ev.stage != stage {
                prop_assert!(breaches.is_empty(), "breaches at stage {}: {:?}", stage, breaches);
                stage = ev.stage;
            }
            match ev.kind.as_str() {
                "restraint-set" => {
                    held.insert(ev.get_parsed("block").unwrap(), ev.get_u64("value").unwrap());
                }
                "initialize" => {
                    let target: BlockId = ev.get_parsed("block").unwrap();
                    held.retain(|b, _| b.order() < target.order());
                    breaches.retain(|(b, _, _)| b.order() < target.order());
                }
                "route" => {
                    let x = ev.get_u64("elem").unwrap();
                    let side = if ev.get("to") == Some("A0") { Side::Zero } else { Side::One };
                    for (&b, &r) in &held {
                        if b.side == side && x <= r {
                            breaches.push((b, r, x));
                        }
                    }
                }
                _ => {}
            }
        }
        prop_assert!(breaches.is_empty(), "breaches at stage {}: {:?}", stage, breaches);
    }

    #[test]
    fn initializations_have_a_cause(sc in any_scenario()) {
        let ob = observe(sc);
        let mut seen: Vec<&str> = Vec::new();
        let mut stage = u64::MAX;
        for ev in ob.trace.iter() {
            if ev.stage != stage {
                stage = ev.stage;
                seen.clear();
            }
            if ev.kind.as_str() == "initialize" {
                let cause = ev.get("cause").unwrap();
                prop_assert!(cause == "route" || cause == "act");
                prop_assert!(seen.contains(&cause), "uncaused initialize at stage {}", stage);
            }
            seen.push(ev.kind.as_str());
        }
    }

    #[test]
    fn sacks_definitions_match_d_and_a0(sc in sacks_scenario()) {
        let ob = observe(sc);
        let mut defined: BTreeSet<(ReqId, u64)> = BTreeSet::new();
        for ev in ob.trace.iter() {
            match ev.kind.as_str() {
                "define-local" => {
                    let req: ReqId = ev.get_parsed("req").unwrap();
                    let x = ev.get_u64("input").unwrap();
                    let k = ev.get_u64("k").unwrap() == 1;
                    prop_assert_eq!(members_at(&ob.d, ev.stage).contains(&x), k);
                    let a = snapshot_of(&ob.a[req.side.index() as usize], ev.stage);
                    let expect = BitString::restriction(&a, ev.stage as usize);
                    prop_assert_eq!(ev.get_parsed::<BitString>("sigma").unwrap(), expect);
                    prop_assert!(defined.insert((req, x)), "{} redefined at {} for {}", req, ev.stage, x);
                }
                "initialize" => {
                    let snapshot: Vec<_> = defined.iter().copied().collect();
                    for (req, x) in snapshot {
                        if ob.initializes(ev, req) {
                            defined.remove(&(req, x));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    #[test]
    fn sacks_diagonalizations_persist(sc in sacks_scenario()) {
        let ob = observe(sc);
        let h = ob.sc.horizon;
        let inits: Vec<&TraceEvent> = ob.events("initialize").collect();
        for ev in ob.events("diagonalize") {
            let req: ReqId = ev.get_parsed("req").unwrap();
            let injured = inits.iter().any(|i| i.stage > ev.stage && ob.initializes(i, req));
            if injured {
                continue;
            }
            let x = ev.get_u64("input").unwrap();
            let k = ev.get_u64("k").unwrap() == 1;
            let sigma: BitString = ev.get_parsed("sigma").unwrap();
            let a = snapshot_of(&ob.a[req.side.index() as usize], h);
            prop_assert!(in_cone(&sigma, &a));
            let phi = ob.sc.functional(req.side, req.e).unwrap();
            let holds = matches!(evaluate(phi, h, &a, None, x), Outcome::Convergent { k: v, .. } if v == k);
            prop_assert!(holds, "{} at x={} no longer computes k", req, x);
            prop_assert_ne!(members_at(&ob.d, h).contains(&x), k);
        }
    }

    #[test]
    fn certification_windows_are_sound(sc in robinson_scenario()) {
        let ob = observe(sc);
        let sets = guessing_sets(&ob);
        for ev in ob.trace.iter() {
            let kind = ev.kind.as_str();
            if kind != "certify" && kind != "refuse-certify" {
                continue;
            }
            let sigma: BitString = ev.get_parsed("sigma").unwrap();
            let j = ev.get_u64("j").unwrap();
            let from = ev.get_u64("from").unwrap();
            let Some(at) = ev.get_u64("at") else {
                prop_assert_eq!(ev.get("reason"), Some("horizon"));
                continue;
            };
            if kind == "certify" {
                for u in from..=at {
                    prop_assert!(in_cone(&sigma, &ob.c_at(u)), "C left [σ] at {}", u);
                }
                let w = sets.get(&j).map(Vec::as_slice).unwrap_or(&[]);
                prop_assert!(p_oracle(&ob, w, j, at));
            } else if ev.get("reason") == Some("exit") {
                prop_assert!(!in_cone(&sigma, &ob.c_at(at)));
            }
        }
    }

    #[test]
    fn guesses_respect_their_contract(sc in robinson_scenario()) {
        let ob = observe(sc);
        let h = ob.sc.horizon;
        for (j, w) in guessing_sets(&ob) {
            let row: Vec<bool> = (0..=h).map(|t| p_oracle(&ob, &w, j, t)).collect();
            prop_assert!(!row[0]);
            let changes = row.windows(2).filter(|p| p[0] != p[1]).count() as u64;
            prop_assert!(changes <= ob.sc.q(j));
            if let PPolicy::TruthfulDelay { delay } = ob.sc.p_policy {
                let truth = |t: u64| w.iter().any(|(at, s)| *at <= t && in_cone(s, &ob.c_at(t)));
                let lo = h.saturating_sub(delay);
                if (lo..=h).all(|t| truth(t) == truth(h)) && lo >= delay {
                    prop_assert_eq!(row[h as usize], truth(h));
                }
            }
        }
    }

    #[test]
    fn live_local_axioms_agree_with_phi(sc in robinson_scenario()) {
        let ob = observe(sc);
        // (req, x) -> (k, σ)
        let mut live: BTreeMap<(ReqId, u64), (bool, BitString)> = BTreeMap::new();
        let mut stage = 0;
        let check = |live: &BTreeMap<(ReqId, u64), (bool, BitString)>, s: u64| -> Result<(), TestCaseError> {
            let c = ob.c_at(s);
            for ((req, x), (k, sigma)) in live {
                if !in_cone(sigma, &c) {
                    continue;
                }
                let a = snapshot_of(&ob.a[req.side.index() as usize], s);
                let phi = ob.sc.functional(req.side, req.e).unwrap();
                let v = evaluate(phi, s, &a, Some(&c), *x);
                let holds = matches!(v, Outcome::Convergent { k: got, .. } if got == *k);
                prop_assert!(holds, "{} at x={} stage {}: {:?}", req, x, s, v);
            }
            Ok(())
        };
        for ev in ob.trace.iter() {
            if ev.stage != stage {
                check(&live, stage)?;
                stage = ev.stage;
            }
            match ev.kind.as_str() {
                "define-local" => {
                    let req: ReqId = ev.get_parsed("req").unwrap();
                    live.insert(
                        (req, ev.get_u64("input").unwrap()),
                        (ev.get_u64("k").unwrap() == 1, ev.get_parsed("sigma").unwrap()),
                    );
                }
                "injury" => {
                    let req: ReqId = ev.get_parsed("req").unwrap();
                    live.remove(&(req, ev.get_u64("input").unwrap()));
                }
                "initialize" => live.retain(|(req, _), _| !ob.initializes(ev, *req)),
                _ => {}
            }
        }
        check(&live, stage)?;
    }

    #[test]
    fn settled_certifications_are_final(sc in robinson_scenario()) {
        let ob = observe(sc);
        let h = ob.sc.horizon;
        let mut settled: BTreeSet<(ReqId, u64)> = BTreeSet::new();
        for ev in ob.trace.iter() {
            match ev.kind.as_str() {
                "certify" => {
                    let req: ReqId = ev.get_parsed("req").unwrap();
                    let x = ev.get_u64("input").unwrap();
                    prop_assert!(!settled.contains(&(req, x)), "{} grew F at {} after a settled axiom", req, ev.stage);
                    let sigma: BitString = ev.get_parsed("sigma").unwrap();
                    if (ev.stage..=h).all(|u| in_cone(&sigma, &ob.c_at(u))) {
                        settled.insert((req, x));
                    }
                }
                "injury" => {
                    let req: ReqId = ev.get_parsed("req").unwrap();
                    settled.remove(&(req, ev.get_u64("input").unwrap()));
                }
                "initialize" => settled.retain(|(req, _)| !ob.initializes(ev, *req)),
                _ => {}
            }
        }
    }

    #[test]
    fn restriction_recovers_the_limit(
        horizon in 1u64..64,
        rows in prop::collection::vec((1u64..8, prop::collection::btree_set(0u64..64, 0..8)), 1..10),
    ) {
        let rows: Vec<(Vec<u64>, u64)> = rows
            .into_iter()
            .map(|(b, flips)| {
                let flips: Vec<u64> = flips.into_iter().filter(|&s| s < horizon).take(b as usize - 1).collect();
                (flips, b)
            })
            .collect();
        let limits: Vec<bool> = rows.iter().map(|(f, _)| f.len() % 2 == 1).collect();
        let tab = ApproxTable::from_flips(horizon, rows.clone()).unwrap();
        for n in 0..=horizon {
            let want: BTreeSet<u64> = (0..n.min(limits.len() as u64)).filter(|&x| limits[x as usize]).collect();
            prop_assert_eq!(restrict(&tab, n), want);
        }
        let coded: BTreeSet<u64> = build_change_set(&tab).schedule.entries().map(|(_, c)| c).collect();
        for (x, (_, b)) in rows.iter().enumerate() {
            for i in *b..*b + 8 {
                prop_assert!(!coded.contains(&pair(x as u64, i)));
            }
        }
    }
}
