//! Local functionals: pointwise polynomial expressions in sampled fields and
//! their derivatives.
//!
//! Tensor data is always stored with upper indices. Each value also carries
//! an index-position label so that `raise`/`lower` and covariant gradients
//! print and type-check sensibly; contractions apply the metric explicitly
//! and ignore the label.

mod eval;
mod parse;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::conventions::TensorRank;
use crate::error::FunctionalError;
use crate::lattice::RealField4;

pub use eval::BlockShape;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(String),
    Const(f64),
    Power(Box<Expr>, u32),
    Product(Vec<Expr>),
    Sum(Vec<Expr>),
    Scale(f64, Box<Expr>),
    /// Gradient `∂_μ x` (no axis) or the partial derivative along one axis.
    Deriv(Box<Expr>, Option<usize>),
    /// Divergence `∂_μ V^μ` or `∂_μ F^{μα}`.
    Div(Box<Expr>),
    /// `½(∂^α V^μ - ∂^μ V^α)`.
    DWedge(Box<Expr>),
    Eta(Box<Expr>, Box<Expr>),
    Eps(Vec<Expr>),
    /// `½(a^μ b^ν - a^ν b^μ)`.
    Wedge(Box<Expr>, Box<Expr>),
    Raise(Box<Expr>),
    Lower(Box<Expr>),
}

impl Expr {
    fn is_call(&self) -> bool {
        matches!(
            self,
            Expr::Deriv(..)
                | Expr::Div(_)
                | Expr::DWedge(_)
                | Expr::Eta(..)
                | Expr::Eps(_)
                | Expr::Wedge(..)
                | Expr::Raise(_)
                | Expr::Lower(_)
        )
    }

    fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Var(_) | Expr::Const(_) => vec![],
            Expr::Power(x, _)
            | Expr::Scale(_, x)
            | Expr::Deriv(x, _)
            | Expr::Div(x)
            | Expr::DWedge(x)
            | Expr::Raise(x)
            | Expr::Lower(x) => vec![x],
            Expr::Product(xs) | Expr::Sum(xs) | Expr::Eps(xs) => xs.iter().collect(),
            Expr::Eta(a, b) | Expr::Wedge(a, b) => vec![a, b],
        }
    }

    fn collect_vars<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        if let Expr::Var(n) = self {
            out.insert(n);
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }
}

/// Index position label of a tensor value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexPos {
    None,
    Upper,
    Lower,
}

impl IndexPos {
    fn flip(self) -> Self {
        match self {
            IndexPos::Upper => IndexPos::Lower,
            IndexPos::Lower => IndexPos::Upper,
            IndexPos::None => IndexPos::None,
        }
    }
}

/// Declared tensor rank of every slot name.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTable(BTreeMap<String, TensorRank>);

impl Default for SlotTable {
    /// `f, g, h` scalar; `J, S` vector; `F` antisymmetric.
    fn default() -> Self {
        let mut m = BTreeMap::new();
        for s in ["f", "g", "h"] {
            m.insert(s.to_string(), TensorRank::Scalar);
        }
        for s in ["J", "S"] {
            m.insert(s.to_string(), TensorRank::Vector);
        }
        m.insert("F".to_string(), TensorRank::Antisym2);
        SlotTable(m)
    }
}

impl SlotTable {
    pub fn empty() -> Self {
        SlotTable(BTreeMap::new())
    }

    pub fn insert(&mut self, name: &str, rank: TensorRank) {
        self.0.insert(name.to_string(), rank);
    }

    pub fn get(&self, name: &str) -> Option<TensorRank> {
        self.0.get(name).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFunctional {
    expr: Expr,
    rank: TensorRank,
    label: IndexPos,
    slots: BTreeMap<String, TensorRank>,
}

/// Parse with the default slot table.
pub fn parse_functional(text: &str) -> Result<LocalFunctional, FunctionalError> {
    parse_with_slots(text, &SlotTable::default())
}

pub fn parse_with_slots(text: &str, table: &SlotTable) -> Result<LocalFunctional, FunctionalError> {
    LocalFunctional::from_expr(parse::parse_expr(text)?, table)
}

fn mismatch(msg: String) -> FunctionalError {
    FunctionalError::RankMismatch(msg)
}

fn describe(rank: TensorRank, label: IndexPos) -> String {
    match label {
        IndexPos::None => rank.to_string(),
        IndexPos::Upper => format!("{rank} (upper)"),
        IndexPos::Lower => format!("{rank} (lower)"),
    }
}

/// Rank and label of an expression.
fn infer(e: &Expr, table: &SlotTable) -> Result<(TensorRank, IndexPos), FunctionalError> {
    use TensorRank::*;
    let scalar = (Scalar, IndexPos::None);
    Ok(match e {
        Expr::Var(n) => {
            let r = table.get(n).ok_or_else(|| FunctionalError::UnknownSlot(n.clone()))?;
            (r, if r == Scalar { IndexPos::None } else { IndexPos::Upper })
        }
        Expr::Const(_) => scalar,
        Expr::Power(x, _) => {
            let r = infer(x, table)?;
            if r.0 != Scalar {
                return Err(mismatch(format!("power of a {} value", r.0)));
            }
            scalar
        }
        Expr::Product(xs) => {
            let mut out = scalar;
            for x in xs {
                let r = infer(x, table)?;
                if r.0 != Scalar {
                    if out.0 != Scalar {
                        return Err(mismatch(format!(
                            "product of two tensors ({} and {}); use eta, eps or wedge",
                            out.0, r.0
                        )));
                    }
                    out = r;
                }
            }
            out
        }
        Expr::Sum(xs) => {
            let first = infer(&xs[0], table)?;
            for x in &xs[1..] {
                let r = infer(x, table)?;
                if r != first {
                    return Err(mismatch(format!(
                        "cannot add {} and {}",
                        describe(first.0, first.1),
                        describe(r.0, r.1)
                    )));
                }
            }
            first
        }
        Expr::Scale(_, x) => infer(x, table)?,
        Expr::Deriv(x, None) => match infer(x, table)?.0 {
            Scalar => (Vector, IndexPos::Lower),
            r => return Err(mismatch(format!("gradient of a {r} value (only scalars; use deriv(x, mu))"))),
        },
        Expr::Deriv(x, Some(_)) => infer(x, table)?,
        Expr::Div(x) => match infer(x, table)?.0 {
            Vector => scalar,
            Antisym2 => (Vector, IndexPos::Upper),
            Scalar => return Err(mismatch("divergence of a scalar".into())),
        },
        Expr::DWedge(x) => match infer(x, table)?.0 {
            Vector => (Antisym2, IndexPos::Upper),
            r => return Err(mismatch(format!("dwedge of a {r} value (expects vector)"))),
        },
        Expr::Eta(a, b) => match (infer(a, table)?.0, infer(b, table)?.0) {
            (Vector, Vector) | (Antisym2, Antisym2) => scalar,
            (Vector, Antisym2) | (Antisym2, Vector) => (Vector, IndexPos::Upper),
            (ra, rb) => return Err(mismatch(format!("eta of {ra} and {rb}"))),
        },
        Expr::Wedge(a, b) => match (infer(a, table)?.0, infer(b, table)?.0) {
            (Vector, Vector) => (Antisym2, IndexPos::Upper),
            (ra, rb) => return Err(mismatch(format!("wedge of {ra} and {rb} (expects two vectors)"))),
        },
        Expr::Eps(xs) => {
            let ranks = xs.iter().map(|x| infer(x, table).map(|r| r.0)).collect::<Result<Vec<_>, _>>()?;
            match ranks.as_slice() {
                [Vector, Antisym2] => (Vector, IndexPos::Upper),
                [Antisym2] => (Antisym2, IndexPos::Upper),
                [Vector, Vector] => (Antisym2, IndexPos::Upper),
                [Vector, Vector, Vector] => (Vector, IndexPos::Upper),
                other => {
                    let names: Vec<String> = other.iter().map(|r| r.to_string()).collect();
                    return Err(mismatch(format!("eps of ({})", names.join(", "))));
                }
            }
        }
        Expr::Raise(x) | Expr::Lower(x) => {
            let (r, l) = infer(x, table)?;
            if r == Scalar {
                return Err(mismatch("cannot raise or lower a scalar".into()));
            }
            let target = if matches!(e, Expr::Raise(_)) { IndexPos::Upper } else { IndexPos::Lower };
            if l == target {
                (r, l)
            } else {
                (r, l.flip())
            }
        }
    })
}

fn preserves_zero(e: &Expr) -> bool {
    match e {
        Expr::Var(_) => true,
        Expr::Const(c) => *c == 0.0,
        Expr::Sum(xs) => xs.iter().all(preserves_zero),
        Expr::Product(xs) | Expr::Eps(xs) => xs.iter().any(preserves_zero),
        Expr::Eta(a, b) | Expr::Wedge(a, b) => preserves_zero(a) || preserves_zero(b),
        Expr::Power(x, _)
        | Expr::Scale(_, x)
        | Expr::Deriv(x, _)
        | Expr::Div(x)
        | Expr::DWedge(x)
        | Expr::Raise(x)
        | Expr::Lower(x) => preserves_zero(x),
    }
}

fn deriv_depth(e: &Expr) -> usize {
    let own = usize::from(matches!(e, Expr::Deriv(..) | Expr::Div(_) | Expr::DWedge(_)));
    own + e.children().into_iter().map(deriv_depth).max().unwrap_or(0)
}

impl LocalFunctional {
    pub fn from_expr(expr: Expr, table: &SlotTable) -> Result<Self, FunctionalError> {
        let (rank, label) = infer(&expr, table)?;
        let mut names = BTreeSet::new();
        expr.collect_vars(&mut names);
        let slots = names.into_iter().map(|n| (n.to_string(), table.get(n).unwrap())).collect();
        Ok(LocalFunctional { expr, rank, label, slots })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn rank(&self) -> TensorRank {
        self.rank
    }

    pub fn label(&self) -> IndexPos {
        self.label
    }

    /// Slots referenced by the expression with their declared ranks.
    pub fn slots(&self) -> &BTreeMap<String, TensorRank> {
        &self.slots
    }

    /// Canonical text; parsing it gives back the same tree.
    pub fn canonical(&self) -> String {
        self.expr.to_string()
    }

    /// True when the zero field maps to the zero field.
    pub fn preserves_zero(&self) -> bool {
        preserves_zero(&self.expr)
    }

    /// Maximum nesting of derivative operators; each level widens the
    /// discrete support by one stencil cell.
    pub fn deriv_depth(&self) -> usize {
        deriv_depth(&self.expr)
    }

    /// Evaluate on a block of samples; see [`BlockShape`].
    pub fn eval_block(
        &self,
        shape: &BlockShape,
        bindings: &HashMap<&str, &[Vec<f64>]>,
    ) -> Result<Vec<Vec<f64>>, FunctionalError> {
        for (name, rank) in &self.slots {
            let data = bindings.get(name.as_str()).ok_or_else(|| FunctionalError::UnboundSlot(name.clone()))?;
            if data.len() != rank.components() {
                return Err(FunctionalError::BindingRank {
                    slot: name.clone(),
                    expected: *rank,
                    got: rank_of(data.len()),
                });
            }
        }
        Ok(eval::eval(&self.expr, shape, bindings))
    }
}

fn rank_of(components: usize) -> TensorRank {
    match components {
        1 => TensorRank::Scalar,
        4 => TensorRank::Vector,
        _ => TensorRank::Antisym2,
    }
}

impl fmt::Display for LocalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// Evaluate on whole fields with periodic derivatives in every direction.
pub fn eval_functional(p: &LocalFunctional, bindings: &HashMap<String, RealField4>) -> Result<RealField4, FunctionalError> {
    let mut grid = None;
    let mut data: HashMap<&str, &[Vec<f64>]> = HashMap::new();
    for (name, rank) in p.slots() {
        let field = bindings.get(name).ok_or_else(|| FunctionalError::UnboundSlot(name.clone()))?;
        if field.rank() != *rank {
            return Err(FunctionalError::BindingRank { slot: name.clone(), expected: *rank, got: field.rank() });
        }
        match &grid {
            None => grid = Some(field.grid().clone()),
            Some(g) if **g != **field.grid() => return Err(crate::error::LatticeError::GridMismatch.into()),
            _ => {}
        }
        data.insert(name.as_str(), field.components());
    }
    let grid = match grid {
        Some(g) => g,
        // a slot-free expression still needs a grid to live on
        None => bindings.values().next().map(|f| f.grid().clone()).ok_or_else(|| {
            FunctionalError::UnboundSlot("<any>".to_string())
        })?,
    };
    let shape = BlockShape::full(&grid);
    let out = p.eval_block(&shape, &data)?;
    Ok(RealField4::new(grid, p.rank(), out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_grid_with_cap, GridSpec, DEFAULT_MEMORY_CAP};
    use proptest::prelude::*;

    #[test]
    fn parses_model_style_examples() {
        let p = parse_functional("f + f^2").unwrap();
        assert_eq!(
            p.expr(),
            &Expr::Sum(vec![Expr::Var("f".into()), Expr::Power(Box::new(Expr::Var("f".into())), 2)])
        );
        assert_eq!(p.rank(), TensorRank::Scalar);
        assert_eq!(parse_functional("eta(deriv(f), deriv(f))").unwrap().rank(), TensorRank::Scalar);
        assert_eq!(parse_functional("eps(J, F)").unwrap().rank(), TensorRank::Vector);
        assert_eq!(parse_functional("eta(J, F)").unwrap().rank(), TensorRank::Vector);
        assert_eq!(parse_functional("wedge(S, J) + 0.5*eps(F)").unwrap().rank(), TensorRank::Antisym2);
        assert_eq!(parse_functional("dwedge(J) + 0.1*F").unwrap().rank(), TensorRank::Antisym2);
        assert_eq!(parse_functional("J + 0.1*div(F)").unwrap().rank(), TensorRank::Vector);
    }

    #[test]
    fn rejects_rank_errors() {
        for bad in ["eta(f, f)", "J + f", "J*J", "J^2", "div(f)", "deriv(J)", "eps(f)", "raise(f)", "deriv(f) + J"] {
            assert!(matches!(parse_functional(bad), Err(FunctionalError::RankMismatch(_))), "{bad}");
        }
        assert!(matches!(parse_functional("q + f"), Err(FunctionalError::UnknownSlot(_))));
    }

    #[test]
    fn labels_follow_raise_and_lower() {
        assert_eq!(parse_functional("deriv(f)").unwrap().label(), IndexPos::Lower);
        assert_eq!(parse_functional("raise(deriv(f))").unwrap().label(), IndexPos::Upper);
        assert_eq!(parse_functional("lower(J)").unwrap().label(), IndexPos::Lower);
        assert!(parse_functional("raise(deriv(f)) + J").is_ok());
    }

    #[test]
    fn zero_preservation_flags_constant_branches() {
        assert!(parse_functional("f + f^2").unwrap().preserves_zero());
        assert!(parse_functional("f*(1 + f)").unwrap().preserves_zero());
        assert!(!parse_functional("f + 1").unwrap().preserves_zero());
        assert!(parse_functional("f + 0").unwrap().preserves_zero());
    }

    #[test]
    fn derivative_depth() {
        assert_eq!(parse_functional("f^2").unwrap().deriv_depth(), 0);
        assert_eq!(parse_functional("eta(deriv(f), deriv(f))").unwrap().deriv_depth(), 1);
        assert_eq!(parse_functional("deriv(deriv(f, 0), 1) + f").unwrap().deriv_depth(), 2);
    }

    fn small_grid() -> std::sync::Arc<crate::lattice::Grid> {
        make_grid_with_cap(GridSpec::centered(8, 8, 0.5, 0.5), DEFAULT_MEMORY_CAP).unwrap()
    }

    fn bind(name: &str, f: RealField4) -> HashMap<String, RealField4> {
        let mut m = HashMap::new();
        m.insert(name.to_string(), f);
        m
    }

    #[test]
    fn square_of_samples() {
        let g = small_grid();
        let vals = [0.0, 1.0, 2.0, -3.0];
        let f = RealField4::from_fn(g.clone(), TensorRank::Scalar, |_, o| o[0] = 0.0).unwrap();
        let mut data = f.into_components();
        for (i, v) in vals.iter().enumerate() {
            data[0][i] = *v;
        }
        let f = RealField4::new(g, TensorRank::Scalar, data).unwrap();
        let out = eval_functional(&parse_functional("f^2").unwrap(), &bind("f", f)).unwrap();
        assert_eq!(&out.component(0)[..4], &[0.0, 1.0, 4.0, 9.0]);
    }

    #[test]
    fn gradient_invariant_signs() {
        let g = make_grid_with_cap(GridSpec::centered(16, 16, 0.25, 0.25), DEFAULT_MEMORY_CAP).unwrap();
        let p = parse_functional("eta(deriv(f), deriv(f))").unwrap();
        for (axis, expected) in [(0usize, 1.0), (1, -1.0)] {
            let f = RealField4::from_fn(g.clone(), TensorRank::Scalar, |x, o| o[0] = x[axis]).unwrap();
            let out = eval_functional(&p, &bind("f", f)).unwrap();
            let idx = g.index(5, 7, 8, 9);
            assert!((out.component(0)[idx] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn unbound_and_misbound_slots() {
        let g = small_grid();
        let p = parse_functional("f*g").unwrap();
        let f = RealField4::zeros(g.clone(), TensorRank::Scalar);
        assert!(matches!(eval_functional(&p, &bind("f", f)), Err(FunctionalError::UnboundSlot(_))));
        let j = RealField4::zeros(g, TensorRank::Vector);
        let q = parse_functional("f").unwrap();
        assert!(matches!(eval_functional(&q, &bind("f", j)), Err(FunctionalError::BindingRank { .. })));
    }

    fn arb_expr() -> impl Strategy<Value = String> {
        let leaf = prop_oneof![
            Just("f".to_string()),
            Just("g".to_string()),
            (-5.0f64..5.0).prop_map(|c| format!("{c:?}")),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} + {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} - {b}")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}*{b}")),
                (inner.clone(), 1u32..4).prop_map(|(a, n)| format!("({a})^{n}")),
                inner.clone().prop_map(|a| format!("({a})")),
                inner.clone().prop_map(|a| format!("-({a})")),
                inner.clone().prop_map(|a| format!("eta(deriv({a}), deriv(f))")),
                (inner.clone(), 0usize..4).prop_map(|(a, m)| format!("deriv({a}, {m})")),
            ]
        })
    }

    proptest! {
        #[test]
        fn canonical_printing_is_idempotent(s in arb_expr()) {
            let p = parse_functional(&s).unwrap();
            let q = parse_functional(&p.canonical()).unwrap();
            prop_assert_eq!(p.expr(), q.expr());
            prop_assert_eq!(p.canonical(), q.canonical());
        }
    }
}
