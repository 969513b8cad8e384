use edgeseg::device::{allocate_weights, single_device};
use edgeseg::model::{build_conv_model, build_fc_model};
use edgeseg::partition::{enumerate_partitions, even_split, evaluate_partition, exhaustive_best, threshold_partition};
use edgeseg::pipeline::{analytic_makespan, emulate_concurrent, simulate_events};
use edgeseg::systolic::simulate_matvec;
use edgeseg::{
    AllocationPolicy, Backend, ExactPlan, LayerSpec, Location, MatVecJob, PlanStage, Profile, Rational64,
    SimOptions, SweepConfig, SystolicArrayConfig,
};
use proptest::prelude::*;

fn ms(v: i64) -> Rational64 {
    Rational64::new(v, 1000)
}

fn exact_plan() -> impl Strategy<Value = ExactPlan> {
    prop::collection::vec((0i64..5_000, 0i64..1_000), 1..=6).prop_map(|raw| ExactPlan {
        stages: raw
            .into_iter()
            .enumerate()
            .map(|(i, (svc, xfer))| PlanStage {
                service_s: ms(svc),
                transfer_s: if i == 0 { ms(0) } else { ms(xfer) },
            })
            .collect(),
    })
}

fn int8_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<i8>>> {
    prop::collection::vec(prop::collection::vec(any::<i8>(), cols), rows)
}

fn matvec_case() -> impl Strategy<Value = (SystolicArrayConfig, MatVecJob)> {
    (1usize..=16, 1usize..=16, 1usize..=8, 1usize..=8, 1usize..=8)
        .prop_flat_map(|(m, k, b, r, c)| {
            (Just((r, c)), int8_matrix(m, k), int8_matrix(b, k))
        })
        .prop_map(|((rows, cols), w, x)| {
            (
                SystolicArrayConfig { rows, cols, clock_hz: 1_000 },
                MatVecJob::new(w, x).unwrap(),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conv_macs_match_nested_loops(c in 1u64..=8, f in 1u64..=8, kh in 1u64..=8, kw in 1u64..=8, h in 1u64..=8, w in 1u64..=8) {
        let layer = LayerSpec::Convolution { in_channels: c, filters: f, kernel_h: kh, kernel_w: kw, in_h: h, in_w: w };
        let mut count = 0u64;
        for _ in 0..h { for _ in 0..w { for _ in 0..f { for _ in 0..c { for _ in 0..kh { for _ in 0..kw {
            count += 1;
        }}}}}}
        prop_assert_eq!(layer.macs(), count);
    }

    #[test]
    fn fc_weight_bytes_equal_macs(n in 1u64..=3000, layers in 2u64..=8) {
        let cfg = SweepConfig { layer_count: layers, ..SweepConfig::fc_default() };
        let model = build_fc_model(&cfg, n).unwrap();
        prop_assert_eq!(model.weight_bytes(), model.macs());
        prop_assert!(model.validate().is_ok());
    }

    #[test]
    fn conv_generator_is_shape_compatible(f in 1u64..=64, layers in 1u64..=6) {
        let cfg = SweepConfig { layer_count: layers, ..SweepConfig::conv_default() };
        let model = build_conv_model(&cfg, f).unwrap();
        prop_assert!(model.validate().is_ok());
        for pair in model.layers.windows(2) {
            prop_assert_eq!(pair[0].output_bytes(), pair[1].input_bytes());
        }
    }

    #[test]
    fn systolic_matches_integer_matmul((cfg, job) in matvec_case()) {
        let out = simulate_matvec(&cfg, &job).unwrap();
        let (m, k, b) = job.dims().unwrap();
        for row in 0..m {
            for input in 0..b {
                let expect: i32 = (0..k).map(|i| job.weights[row][i] as i32 * job.inputs[input][i] as i32).sum();
                prop_assert_eq!(out.outputs[row][input], expect);
            }
        }
        prop_assert!(out.report.utilization <= 1.0);
        prop_assert_eq!(out.report.mac_ops, (m * k * b) as u64);
        prop_assert_eq!(simulate_matvec(&cfg, &job).unwrap().report, out.report);
    }

    #[test]
    fn allocation_never_exceeds_capacity(
        weights in prop::collection::vec(0u64..5_000, 1..10),
        capacity in 0u64..20_000,
        skip in any::<bool>(),
    ) {
        let policy = if skip { AllocationPolicy::FirstFitSkip } else { AllocationPolicy::NoSkip };
        let p = allocate_weights(&weights, capacity, policy);
        prop_assert!(p.on_chip_used_bytes <= capacity);
        prop_assert_eq!(p.on_chip_used_bytes + p.host_bytes, weights.iter().sum::<u64>());
        let on_chip: u64 = weights.iter().zip(&p.locations).filter(|(_, l)| **l == Location::OnChip).map(|(w, _)| *w).sum();
        prop_assert_eq!(on_chip, p.on_chip_used_bytes);
        if skip {
            let more = allocate_weights(&weights, capacity + 1_000, policy);
            prop_assert!(more.host_bytes <= p.host_bytes);
        }
    }

    #[test]
    fn larger_memory_never_hurts(n in 100u64..2700, extra_kib in 0u64..16_384) {
        let model = build_fc_model(&SweepConfig::fc_default(), n).unwrap();
        let base = Profile::default();
        let bigger = Profile { on_chip_bytes: base.on_chip_bytes + extra_kib * 1024, ..base.clone() };
        let (p0, c0) = single_device(&model, &base);
        let (p1, c1) = single_device(&model, &bigger);
        prop_assert!(p1.host_bytes <= p0.host_bytes);
        prop_assert!(c1.total_s <= c0.total_s);
    }

    #[test]
    fn partitions_are_compositions(l in 1usize..=10, s_seed in 0usize..10) {
        let s = 1 + s_seed % l;
        for p in enumerate_partitions(l, s).unwrap() {
            prop_assert_eq!(p.sizes.len(), s);
            prop_assert!(p.sizes.iter().all(|&x| x >= 1));
            prop_assert_eq!(p.sizes.iter().sum::<usize>(), l);
            let ranges: Vec<_> = p.ranges().collect();
            prop_assert_eq!(ranges[0].start, 0);
            prop_assert_eq!(ranges[s - 1].end, l);
            for w in ranges.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
            }
        }
        let even = even_split(l, s).unwrap();
        prop_assert!(even.sizes.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(even.sizes[s - 1] - even.sizes[0] <= 1);
    }

    #[test]
    fn backends_agree_exactly(plan in exact_plan(), batch in 1usize..=40) {
        let events = simulate_events(&plan, &SimOptions::new(batch, Backend::Events)).unwrap();
        let emulated = emulate_concurrent(&plan, &SimOptions::new(batch, Backend::Emulated)).unwrap();
        prop_assert_eq!(analytic_makespan(&plan, batch), events.makespan_s);
        prop_assert_eq!(events.makespan_s, emulated.makespan_s);
        prop_assert_eq!(&events.timeline, &emulated.timeline);
    }

    #[test]
    fn timelines_are_fifo(plan in exact_plan(), batch in 1usize..=20, cap in prop::option::of(1usize..=3)) {
        let mut opts = SimOptions::new(batch, Backend::Events);
        opts.queue_capacity = cap;
        let res = simulate_events(&plan, &opts).unwrap();
        let n = plan.stages.len();
        let at = |stage: usize, input: usize| &res.timeline[stage * batch + input];
        for stage in 0..n {
            for input in 0..batch {
                let ev = at(stage, input);
                prop_assert_eq!((ev.stage, ev.input_index), (stage, input));
                if input > 0 {
                    prop_assert!(at(stage, input - 1).end_s <= ev.start_s);
                }
                if stage > 0 {
                    prop_assert!(at(stage - 1, input).end_s <= ev.start_s);
                }
            }
        }
        // Emulation agrees with events under bounded queues too.
        let mut emu = opts;
        emu.backend = Backend::Emulated;
        prop_assert_eq!(emulate_concurrent(&plan, &emu).unwrap().makespan_s, res.makespan_s);
    }

    #[test]
    fn makespan_is_monotone(plan in exact_plan(), batch in 1usize..=30, which in 0usize..6, bump in 1i64..500) {
        let base = analytic_makespan(&plan, batch);
        prop_assert!(analytic_makespan(&plan, batch + 1) >= base);
        let mut slower = plan.clone();
        let i = which % slower.stages.len();
        slower.stages[i].service_s += ms(bump);
        prop_assert!(analytic_makespan(&slower, batch) >= base);

        let eff = plan.effective();
        let path: Rational64 = eff.iter().copied().sum();
        let bottleneck = eff.iter().copied().max().unwrap();
        let lower = path.max(Rational64::from_integer(batch as i64) * bottleneck) - bottleneck;
        prop_assert!(base >= lower);
    }

    #[test]
    fn exhaustive_dominates(n in 100u64..2700, s in 2usize..=4, batch in prop::sample::select(vec![1usize, 50])) {
        let model = build_fc_model(&SweepConfig::fc_default(), n).unwrap();
        let profiles = vec![Profile::default(); s];
        let best = exhaustive_best(&model, s, &profiles, batch, 1_000).unwrap();
        let even = evaluate_partition(&model, &even_split(5, s).unwrap(), &profiles, batch).unwrap();
        let thr = threshold_partition(&model, s, &profiles, batch, 1e-4).unwrap();
        prop_assert!(best.batch_makespan_s <= even.batch_makespan_s);
        prop_assert!(best.batch_makespan_s <= thr.batch_makespan_s);
    }
}
