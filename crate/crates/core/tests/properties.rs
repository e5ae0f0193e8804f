use loopsoup_core::excursions::ExcursionSampler;
use loopsoup_core::gff::{renormalized_square, GffSampler};
use loopsoup_core::identities::{spin_law, CouplingMatrix, SpinLaw};
use loopsoup_core::lattice::{arc_harmonic, build_rect_domain, dirichlet_form, ArcSegment, ScalarField, Support};
use loopsoup_core::loopsoup::{
    clusters, decompose_boundary_loops, occupation_field, read_loops, reassemble, rewire_step, write_loops,
    LoopEnsemble, LoopSoupSampler, RewireMode,
};
use loopsoup_core::rng::StreamRng;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn soup(nx: usize, ny: usize, alpha: f64, seed: u64) -> LoopEnsemble {
    let d = build_rect_domain(nx, ny, &[]).unwrap();
    LoopSoupSampler::with_tolerance(&d, alpha, 1e-8)
        .unwrap()
        .sample(&mut StreamRng::new(seed, 0))
}

/// Cut points `c₀ < c₁ < …` on the ring, turned into contiguous arcs.
fn ring_partition(len: usize, cuts: &[usize]) -> Vec<ArcSegment> {
    let mut c: Vec<usize> = cuts.iter().map(|x| x % len).collect();
    c.sort_unstable();
    c.dedup();
    (0..c.len())
        .map(|i| {
            let (s, e) = (c[i], if i + 1 < c.len() { c[i + 1] } else { len });
            ArcSegment::ring(i + 1, s, e)
        })
        .filter(|a| matches!(a.segment, loopsoup_core::lattice::BoundarySegment::Ring { start, end } if start < end))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirichlet_form_is_symmetric_bilinear(
        a in prop::collection::vec(-3.0f64..3.0, 24),
        b in prop::collection::vec(-3.0f64..3.0, 24),
        c in prop::collection::vec(-3.0f64..3.0, 24),
        s in -2.0f64..2.0,
    ) {
        let d = build_rect_domain(4, 2, &[]).unwrap();
        let n = d.n_vertices();
        let f = |v: &[f64]| ScalarField::from_values(&d, Support::All, v[..n].to_vec()).unwrap();
        let (fa, fb, fc) = (f(&a), f(&b), f(&c));
        let lin = ScalarField::from_values(&d, Support::All, (0..n).map(|v| a[v] + s * b[v]).collect()).unwrap();
        let lhs = dirichlet_form(&d, &lin, &fc);
        let rhs = dirichlet_form(&d, &fa, &fc) + s * dirichlet_form(&d, &fb, &fc);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        prop_assert!((dirichlet_form(&d, &fa, &fb) - dirichlet_form(&d, &fb, &fa)).abs() < 1e-12);
        prop_assert!(dirichlet_form(&d, &fa, &fa) >= 0.0);
    }

    #[test]
    fn renormalized_square_shift_identity(seed in any::<u64>(), shift in prop::collection::vec(-2.0f64..2.0, 20)) {
        // [[(h + Φ)²]] − [[h²]] = 2hΦ + Φ²
        let d = build_rect_domain(3, 2, &[]).unwrap();
        let zero = ScalarField::zeros(&d, Support::All);
        let h = GffSampler::new(&d, &zero).unwrap().sample(&mut StreamRng::new(seed, 0));
        let phi = ScalarField::from_fn(&d, Support::All, |v| shift[v]);
        let shifted = renormalized_square(&d, &h, &phi).unwrap();
        let plain = renormalized_square(&d, &h, &zero).unwrap();
        for &x in d.interior() {
            let expect = 2.0 * h.field.get(x) * phi.get(x) + phi.get(x).powi(2);
            prop_assert!((shifted.get(x) - plain.get(x) - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn rewiring_conserves_local_times_jumps_and_clusters(seed in any::<u64>(), unoriented in any::<bool>()) {
        let d = build_rect_domain(3, 3, &[]).unwrap();
        let mut e = soup(3, 3, 2.0, seed);
        let mode = if unoriented { RewireMode::Unoriented } else { RewireMode::Oriented };
        let occ = occupation_field(&d, &e);
        let jumps = e.undirected_edge_multiset();
        let directed = e.edge_multiset();
        let part = clusters(&e, None);
        let mut rng = StreamRng::new(seed, 1);
        for _ in 0..20 {
            rewire_step(&mut e, mode, &mut rng);
            let after = occupation_field(&d, &e);
            prop_assert!(occ.values().iter().zip(after.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            prop_assert_eq!(&jumps, &e.undirected_edge_multiset());
            if mode == RewireMode::Oriented {
                prop_assert_eq!(&directed, &e.edge_multiset());
            }
            prop_assert_eq!(&part, &clusters(&e, None));
            for l in e.nontrivial() {
                for (a, b) in l.jumps() {
                    prop_assert!(d.neighbors(a).contains(&b));
                }
            }
        }
    }

    #[test]
    fn decompose_then_reassemble_is_identity(seed in any::<u64>(), marks in prop::collection::vec(0usize..9, 0..4)) {
        let e = soup(3, 3, 1.0, seed);
        let dec = decompose_boundary_loops(&e, &marks);
        prop_assert_eq!(reassemble(&dec), e);
    }

    #[test]
    fn clusters_ignore_loop_order(seed in any::<u64>()) {
        let e = soup(3, 3, 1.5, seed);
        let mut shuffled = e.clone();
        shuffled.loops.shuffle(&mut StreamRng::new(seed, 2));
        prop_assert_eq!(clusters(&e, None), clusters(&shuffled, None));
    }

    #[test]
    fn loop_text_format_round_trips(seed in any::<u64>()) {
        let e = soup(2, 3, 1.0, seed);
        prop_assert_eq!(read_loops(&write_loops(&e)).unwrap(), e);
    }

    #[test]
    fn spin_law_flip_symmetry_and_single_flip_ratios(
        n in 2usize..6,
        raw in prop::collection::vec(0.0f64..2.0, 15),
    ) {
        let mut m = vec![vec![0.0; n]; n];
        let mut it = raw.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = *it.next().unwrap();
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        let law = spin_law(&CouplingMatrix::new(m.clone()).unwrap());
        let full = (1usize << n) - 1;
        for mask in 0..=full {
            prop_assert!((law.probabilities[mask] - law.probabilities[full ^ mask]).abs() < 1e-14);
            for i in 0..n {
                let flipped = mask ^ (1 << i);
                let ai = SpinLaw::spin(mask, i);
                let field: f64 = (0..n).filter(|&j| j != i).map(|j| SpinLaw::spin(mask, j) * m[i][j]).sum();
                let ratio = law.probabilities[mask] / law.probabilities[flipped];
                prop_assert!((ratio.ln() - 2.0 * ai * field).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pairing_identity_on_random_partitions(
        nx in 1usize..5,
        ny in 1usize..5,
        cuts in prop::collection::vec(0usize..64, 2..4),
    ) {
        let arcs = ring_partition(2 * (nx + ny), &cuts);
        prop_assume!(arcs.len() >= 2);
        let d = build_rect_domain(nx, ny, &arcs).unwrap();
        let ex = ExcursionSampler::new(&d).unwrap();
        for i in 0..arcs.len() {
            for j in i + 1..arcs.len() {
                let hi = arc_harmonic(&d, &[i]).unwrap();
                let hj = arc_harmonic(&d, &[j]).unwrap();
                let form = dirichlet_form(&d, &hi, &hj);
                prop_assert!((-form - ex.mass(i, j)).abs() < 1e-12, "{} vs {}", form, ex.mass(i, j));
            }
        }
    }
}
