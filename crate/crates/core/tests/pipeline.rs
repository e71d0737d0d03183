use x0fiber::arakelov::{divisor_set, g_rat, gauge_fix, Cusp};
use x0fiber::contract::minimal_model;
use x0fiber::fiber::{edixhoven_fiber, Stage};
use x0fiber::numth::{primes_in, PrimeContext};
use x0fiber::paperforms::{oracle_labels, oracle_matrix, oracle_vm, paper_gauge, verify_all};
use x0fiber::ratlin::ExactRational;

fn one_per_class(r: u32) -> Vec<PrimeContext> {
    [13, 17, 19, 23, 37, 41, 43, 47, 101, 103]
        .into_iter()
        .map(|p| PrimeContext::new(p, r).unwrap())
        .collect()
}

#[test]
fn every_class_verifies() {
    for r in [3, 4] {
        for ctx in one_per_class(r) {
            let rep = verify_all(&ctx);
            assert!(rep.all_passed(), "{}", serde_json::to_string_pretty(&rep).unwrap());
        }
    }
}

#[test]
fn labels_line_up_with_oracle() {
    for r in [3, 4] {
        for ctx in one_per_class(r) {
            let ed = edixhoven_fiber(&ctx).unwrap();
            assert_eq!(ed.labels(), oracle_labels(&ctx, Stage::Edixhoven));
            let (t, _) = minimal_model(&ed).unwrap();
            assert_eq!(t.labels(), oracle_labels(&ctx, Stage::Minimal));
            assert_eq!(t.matrix(), &oracle_matrix(&ctx, Stage::Minimal));
        }
    }
}

#[test]
fn paper_gauge_reproduces_printed_vectors() {
    for r in [3, 4] {
        for ctx in one_per_class(r) {
            let set = divisor_set(&ctx).unwrap();
            for (m, v) in [(Cusp::Zero, &set.v0), (Cusp::Infinity, &set.vinf)] {
                let fixed = gauge_fix(v, &paper_gauge(&ctx, m), &ExactRational::zero()).unwrap();
                assert_eq!(fixed.coefficients(), &oracle_vm(&ctx, m)[..], "p={} r={r}", ctx.p);
            }
        }
    }
}

#[test]
fn g_rat_matches_oracle_vectors() {
    for p in primes_in(5, 60) {
        for r in [3, 4] {
            let ctx = PrimeContext::new(p, r).unwrap();
            let set = divisor_set(&ctx).unwrap();
            let f = &set.system.fiber;
            let mine = g_rat(f, &set.system.genus, &set.v0, &set.vinf).unwrap();
            let v0 = x0fiber::arakelov::VerticalDivisor::new(f, oracle_vm(&ctx, Cusp::Zero)).unwrap();
            let vi = x0fiber::arakelov::VerticalDivisor::new(f, oracle_vm(&ctx, Cusp::Infinity)).unwrap();
            assert_eq!(mine, g_rat(f, &set.system.genus, &v0, &vi).unwrap(), "p={p} r={r}");
        }
    }
}
