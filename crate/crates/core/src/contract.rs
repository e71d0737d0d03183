//! Castelnuovo blow-downs of (-1)-components and transport of divisors and of
//! the canonical class through them.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::arakelov::VerticalDivisor;
use crate::error::{inconsistent, invalid, Result};
use crate::fiber::{Fiber, Label, Stage};
use crate::ratlin::{solve_symmetric, ExactRational, RatMatrix};

/// One blow-down.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContractionStep {
    pub contracted: Label,
    /// `(C, C.X)` for every survivor `C`; this is the coefficient of `X` in `pi^* C'`.
    pub pullback_rows: Vec<(Label, ExactRational)>,
    /// Coefficient of `X` in the pullback of the canonical class across this
    /// step, i.e. `K.X`. [`contract_once`] assumes `X` is a smooth rational
    /// curve; [`minimal_model`] uses the transported canonical class instead.
    pub canonical_coefficient: ExactRational,
}

/// A sequence of blow-downs from an Edixhoven fiber to its minimal model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractionMap {
    steps: Vec<ContractionStep>,
    source: Fiber,
    target: Fiber,
    /// Source indices of the contracted components, in contraction order.
    contracted: Vec<usize>,
    /// For each target component, its total pullback in the source basis.
    pullback: Vec<Vec<ExactRational>>,
    /// `K.W` on the target, carried step by step.
    canonical_sequential: Vec<ExactRational>,
}

impl ContractionMap {
    pub fn steps(&self) -> &[ContractionStep] {
        &self.steps
    }

    pub fn source(&self) -> &Fiber {
        &self.source
    }

    pub fn target(&self) -> &Fiber {
        &self.target
    }

    pub fn contracted_indices(&self) -> &[usize] {
        &self.contracted
    }

    pub fn contracted_labels(&self) -> Vec<Label> {
        self.steps.iter().map(|s| s.contracted).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    /// Coefficients of the contracted components in `pi^* C'` for every target
    /// component `C'`, in contraction order.
    pub fn pullback_rows(&self) -> Vec<(Label, Vec<ExactRational>)> {
        self.target
            .components()
            .iter()
            .zip(&self.pullback)
            .map(|(c, row)| (c.label, self.contracted.iter().map(|&x| row[x].clone()).collect()))
            .collect()
    }

    /// Coefficients `a` in `pi^* K = K + sum a_i X_i`, solved simultaneously on
    /// the contracted set.
    pub fn canonical_pullback_coefficients(&self) -> Result<Vec<ExactRational>> {
        if self.contracted.is_empty() {
            return Ok(Vec::new());
        }
        let k = adjunction_vector(&self.source);
        let sub = self.source.matrix().principal_submatrix(&self.contracted);
        let rhs: Vec<ExactRational> = self.contracted.iter().map(|&x| -&k[x]).collect();
        let s = solve_symmetric(&sub, &rhs)?;
        if !s.kernel_basis.is_empty() {
            return Err(inconsistent("contracted set has a degenerate intersection form"));
        }
        s.particular
            .ok_or_else(|| inconsistent("canonical pullback system is inconsistent"))
    }
}

impl Serialize for ContractionMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            label: Label,
            coefficients: &'a [ExactRational],
        }
        let rows = self.pullback_rows();
        let rows: Vec<Row> = rows
            .iter()
            .map(|(l, c)| Row {
                label: *l,
                coefficients: c,
            })
            .collect();
        let mut s = serializer.serialize_struct("ContractionMap", 3)?;
        s.serialize_field("steps", &self.steps)?;
        s.serialize_field("contracted", &self.contracted_labels())?;
        s.serialize_field("pullback_rows", &rows)?;
        s.end()
    }
}

/// `K.W = -W^2 - 2` for every component, valid when all components are
/// smooth rational curves.
pub fn adjunction_vector(f: &Fiber) -> Vec<ExactRational> {
    let two = ExactRational::from(2);
    (0..f.len()).map(|i| -f.matrix().get(i, i) - &two).collect()
}

/// Indices of components with self-intersection exactly -1.
pub fn find_contractible(f: &Fiber) -> Vec<usize> {
    let m1 = ExactRational::from(-1);
    (0..f.len()).filter(|&i| f.matrix().get(i, i) == &m1).collect()
}

fn contract_matrix(m: &RatMatrix, idx: usize) -> RatMatrix {
    let keep: Vec<usize> = (0..m.rows()).filter(|&i| i != idx).collect();
    let mut out = m.principal_submatrix(&keep);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            let cx = m.get(i, idx);
            let dx = m.get(j, idx);
            if !cx.is_zero() && !dx.is_zero() {
                let v = out.get(a, b) + cx * dx;
                out.set(a, b, v);
            }
        }
    }
    out
}

/// Blows down component `idx`, which must have self-intersection -1.
pub fn contract_once(f: &Fiber, idx: usize) -> Result<(Fiber, ContractionStep)> {
    if idx >= f.len() {
        return Err(invalid(format!("component index {idx} out of range")));
    }
    if f.matrix().get(idx, idx) != &ExactRational::from(-1) {
        return Err(invalid(format!(
            "{} has self-intersection {}, not -1",
            f.components()[idx].label,
            f.matrix().get(idx, idx)
        )));
    }
    let step = ContractionStep {
        contracted: f.components()[idx].label,
        pullback_rows: (0..f.len())
            .filter(|&i| i != idx)
            .map(|i| (f.components()[i].label, f.matrix().get(i, idx).clone()))
            .collect(),
        canonical_coefficient: -f.matrix().get(idx, idx) - ExactRational::from(2),
    };
    let comps = f
        .components()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, c)| c.clone())
        .collect();
    let m = contract_matrix(f.matrix(), idx);
    let out = Fiber::from_parts(*f.ctx(), f.stage(), comps, m)?;
    Ok((out, step))
}

/// Contracts (-1)-components until none remain.
pub fn minimal_model(f: &Fiber) -> Result<(Fiber, ContractionMap)> {
    if f.stage() != Stage::Edixhoven {
        return Err(invalid("minimal_model expects an Edixhoven-stage fiber"));
    }
    let n = f.len();
    let mut cur = f.clone();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut pullback: Vec<Vec<ExactRational>> = (0..n)
        .map(|i| {
            let mut v = vec![ExactRational::zero(); n];
            v[i] = ExactRational::one();
            v
        })
        .collect();
    let mut canon = adjunction_vector(f);
    let mut steps = Vec::new();
    let mut contracted = Vec::new();

    while let Some(&x) = find_contractible(&cur).first() {
        let col: Vec<ExactRational> = (0..cur.len()).map(|i| cur.matrix().get(i, x).clone()).collect();
        // pi^* C' = pi^* C + (C.X) pi^* X  and  K'.C' = K.C + (C.X)(K.X)
        let px = pullback[x].clone();
        let kx = canon[x].clone();
        for i in 0..cur.len() {
            if i == x || col[i].is_zero() {
                continue;
            }
            for (t, v) in px.iter().enumerate() {
                if !v.is_zero() {
                    pullback[i][t] += &col[i] * v;
                }
            }
            canon[i] += &col[i] * &kx;
        }
        let (next, mut step) = contract_once(&cur, x)?;
        step.canonical_coefficient = kx;
        contracted.push(alive.remove(x));
        pullback.remove(x);
        canon.remove(x);
        steps.push(step);
        cur = next;
    }

    let target = Fiber::from_parts(
        *cur.ctx(),
        Stage::Minimal,
        cur.components().to_vec(),
        cur.matrix().clone(),
    )?;
    let map = ContractionMap {
        steps,
        source: f.clone(),
        target: target.clone(),
        contracted,
        pullback,
        canonical_sequential: canon,
    };
    check_pullbacks(&map)?;
    Ok((target, map))
}

/// Simultaneous solve of `pi^* C' . X_j = 0` compared against the composed
/// sequential rows.
fn check_pullbacks(map: &ContractionMap) -> Result<()> {
    if map.contracted.is_empty() {
        return Ok(());
    }
    let src = map.source.matrix();
    let sub = src.principal_submatrix(&map.contracted);
    for (c, row) in map.target.components().iter().zip(&map.pullback) {
        let i = map
            .source
            .index_of(&c.label)
            .ok_or_else(|| inconsistent("target label missing from source"))?;
        let rhs: Vec<ExactRational> = map.contracted.iter().map(|&x| -src.get(i, x)).collect();
        let s = solve_symmetric(&sub, &rhs)?;
        let b = s
            .particular
            .ok_or_else(|| inconsistent("pullback system is inconsistent"))?;
        let got: Vec<ExactRational> = map.contracted.iter().map(|&x| row[x].clone()).collect();
        if got != b {
            return Err(inconsistent(format!(
                "sequential pullback of {} disagrees with the simultaneous solve",
                c.label
            )));
        }
    }
    Ok(())
}

/// `pi^* d` in the source basis.
pub fn pullback_divisor(map: &ContractionMap, d: &VerticalDivisor) -> Result<VerticalDivisor> {
    if d.labels() != map.target.labels().as_slice() {
        return Err(invalid("divisor is not indexed by the target components"));
    }
    let n = map.source.len();
    let mut out = vec![ExactRational::zero(); n];
    for (coef, row) in d.coefficients().iter().zip(&map.pullback) {
        if coef.is_zero() {
            continue;
        }
        for (o, v) in out.iter_mut().zip(row) {
            if !v.is_zero() {
                *o += coef * v;
            }
        }
    }
    VerticalDivisor::new(&map.source, out)
}

/// `K.C'` for every target component, computed through `pi^* K`.
pub fn canonical_on_target(map: &ContractionMap) -> Result<Vec<ExactRational>> {
    let k = adjunction_vector(&map.source);
    let a = map.canonical_pullback_coefficients()?;
    let src = map.source.matrix();
    let mut out = Vec::with_capacity(map.target.len());
    for c in map.target.components() {
        let i = map
            .source
            .index_of(&c.label)
            .ok_or_else(|| inconsistent("target label missing from source"))?;
        // (K + aX).(C + bX) = (K + aX).C since (K + aX).X = 0
        let v = &k[i]
            + a.iter()
                .zip(&map.contracted)
                .map(|(ai, &x)| ai * src.get(x, i))
                .sum::<ExactRational>();
        out.push(v);
    }
    if out != map.canonical_sequential {
        return Err(inconsistent(
            "canonical class transported step by step disagrees with the pullback solve",
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::edixhoven_fiber;
    use crate::numth::{genus_x0_prime_power, primes_in, PrimeContext};
    use crate::ratlin::{bilinear, rat};
    use proptest::prelude::*;

    fn fib(p: u64, r: u32) -> Fiber {
        edixhoven_fiber(&PrimeContext::new(p, r).unwrap()).unwrap()
    }

    fn q(n: i64, d: i64) -> ExactRational {
        rat(n, d).unwrap()
    }

    fn l(s: &str) -> Label {
        s.parse().unwrap()
    }

    #[test]
    fn r3_is_already_minimal() {
        for p in [5, 7, 11, 13, 17, 19, 23] {
            let f = fib(p, 3);
            assert!(find_contractible(&f).is_empty());
            let (t, map) = minimal_model(&f).unwrap();
            assert!(map.is_identity());
            assert_eq!(t.matrix(), f.matrix());
            assert_eq!(t.stage(), Stage::Minimal);
        }
    }

    #[test]
    fn r4_p13_sequence() {
        let f = fib(13, 4);
        assert_eq!(find_contractible(&f), vec![f.index_of(&l("C2,2")).unwrap()]);
        let (f1, step) = contract_once(&f, f.index_of(&l("C2,2")).unwrap()).unwrap();
        assert_eq!(step.contracted, l("C2,2"));
        assert_eq!(f1.entry(&l("E2"), &l("E2")).unwrap(), &q(-1, 1));
        assert_eq!(f1.entry(&l("C4,0"), &l("C0,4")).unwrap(), &q(2, 1));
        assert_eq!(find_contractible(&f1), vec![f1.index_of(&l("E2")).unwrap()]);

        let (t, map) = minimal_model(&f).unwrap();
        assert_eq!(map.contracted_labels(), vec![l("C2,2"), l("E2"), l("F2")]);
        assert_eq!(t.len(), 8);
        assert_eq!(t.entry(&l("C4,0"), &l("C4,0")).unwrap(), &q(-2191, 1));
        assert_eq!(t.entry(&l("C4,0"), &l("C3,1")).unwrap(), &q(175, 1));
        assert_eq!(t.entry(&l("C4,0"), &l("C0,4")).unwrap(), &q(7, 1));
        assert_eq!(t.entry(&l("C3,1"), &l("C3,1")).unwrap(), &q(-23, 1));
    }

    #[test]
    fn r4_p23_has_four_components() {
        let (t, map) = minimal_model(&fib(23, 4)).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(map.contracted_labels(), vec![l("C2,2"), l("E"), l("F")]);
    }

    #[test]
    fn canonical_pullback_is_fixed() {
        for p in [13, 17, 19, 23, 5, 7, 11] {
            let (_, map) = minimal_model(&fib(p, 4)).unwrap();
            assert_eq!(
                map.canonical_pullback_coefficients().unwrap(),
                vec![q(-4, 1), q(-2, 1), q(-1, 1)]
            );
        }
    }

    #[test]
    fn canonical_on_minimal_p13() {
        let (t, map) = minimal_model(&fib(13, 4)).unwrap();
        let k = canonical_on_target(&map).unwrap();
        let at = |s: &str| k[t.index_of(&l(s)).unwrap()].clone();
        assert_eq!(at("C4,0"), q(2191, 1));
        assert_eq!(at("C3,1"), q(23, 1));
        assert_eq!(at("E1"), q(0, 1));
        assert_eq!(at("F1"), q(1, 1));
    }

    #[test]
    fn pullback_examples() {
        let (t, map) = minimal_model(&fib(13, 4)).unwrap();
        let s = map.source();
        let unit = |lab: &str| {
            let mut v = vec![ExactRational::zero(); t.len()];
            v[t.index_of(&l(lab)).unwrap()] = ExactRational::one();
            VerticalDivisor::new(&t, v).unwrap()
        };
        let pb = pullback_divisor(&map, &unit("C4,0")).unwrap();
        let at = |lab: &str| pb.coefficients()[s.index_of(&l(lab)).unwrap()].clone();
        assert_eq!(at("C4,0"), q(1, 1));
        assert_eq!(at("C2,2"), q(6, 1));
        assert_eq!(at("E2"), q(3, 1));
        assert_eq!(at("F2"), q(2, 1));

        let pe = pullback_divisor(&map, &unit("E1")).unwrap();
        let mut expect = vec![ExactRational::zero(); s.len()];
        expect[s.index_of(&l("E1")).unwrap()] = ExactRational::one();
        assert_eq!(pe.coefficients(), expect.as_slice());

        let zero = VerticalDivisor::new(&t, vec![ExactRational::zero(); t.len()]).unwrap();
        assert!(pullback_divisor(&map, &zero)
            .unwrap()
            .coefficients()
            .iter()
            .all(ExactRational::is_zero));

        let wrong = VerticalDivisor::new(s, vec![ExactRational::zero(); s.len()]).unwrap();
        assert!(pullback_divisor(&map, &wrong).is_err());
    }

    #[test]
    fn contract_once_rejects_non_exceptional() {
        let f = fib(13, 4);
        assert!(contract_once(&f, 0).is_err());
        assert!(contract_once(&f, 99).is_err());
    }

    #[test]
    fn disjoint_pairs_unchanged() {
        let f = fib(13, 4);
        let x = f.index_of(&l("C2,2")).unwrap();
        let (f1, _) = contract_once(&f, x).unwrap();
        // E1 and F1 both miss C2,2
        assert_eq!(f1.entry(&l("E1"), &l("F1")), f.entry(&l("E1"), &l("F1")));
        assert_eq!(f1.entry(&l("E1"), &l("E1")), f.entry(&l("E1"), &l("E1")));
    }

    fn rational_vec(n: usize) -> impl Strategy<Value = Vec<ExactRational>> {
        proptest::collection::vec((-30i64..=30, 1i64..=5), n)
            .prop_map(|v| v.into_iter().map(|(a, b)| rat(a, b).unwrap()).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn contraction_invariants(i in 0usize..166) {
            let p = primes_in(5, 1000)[i];
            let ctx = PrimeContext::new(p, 4).unwrap();
            let f = edixhoven_fiber(&ctx).unwrap();
            let mut cur = f.clone();
            let mut count = 0;
            loop {
                let c = find_contractible(&cur);
                prop_assert!(c.len() <= 1);
                let Some(&x) = c.first() else { break };
                cur = contract_once(&cur, x).unwrap().0;
                prop_assert!(cur.matrix().mul_vec(&cur.multiplicity_rationals()).unwrap().iter().all(ExactRational::is_zero));
                count += 1;
            }
            prop_assert_eq!(count, 3);
            let (t, map) = minimal_model(&f).unwrap();
            prop_assert!(t.matrix().entries().all(ExactRational::is_integer));
            let k = canonical_on_target(&map).unwrap();
            let g = genus_x0_prime_power(&ctx);
            let deg: ExactRational = t.multiplicity_rationals().iter().zip(&k).map(|(m, k)| m * k).sum();
            prop_assert_eq!(deg, ExactRational::from(2 * g - 2));
        }

        #[test]
        fn pullback_preserves_pairing(idx in 0usize..8, x in rational_vec(11), y in rational_vec(11)) {
            let p = [13u64, 17, 19, 23, 37, 41, 43, 47][idx];
            let (t, map) = minimal_model(&fib(p, 4)).unwrap();
            let n = t.len();
            let d1 = VerticalDivisor::new(&t, x[..n].to_vec()).unwrap();
            let d2 = VerticalDivisor::new(&t, y[..n].to_vec()).unwrap();
            let p1 = pullback_divisor(&map, &d1).unwrap();
            let p2 = pullback_divisor(&map, &d2).unwrap();
            let src = map.source().matrix();
            prop_assert_eq!(
                bilinear(src, p1.coefficients(), p2.coefficients()).unwrap(),
                bilinear(t.matrix(), d1.coefficients(), d2.coefficients()).unwrap()
            );
            for &xi in map.contracted_indices() {
                let mut e = vec![ExactRational::zero(); src.rows()];
                e[xi] = ExactRational::one();
                prop_assert!(bilinear(src, p1.coefficients(), &e).unwrap().is_zero());
            }
        }
    }
}
