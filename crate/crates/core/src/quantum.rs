//! Transfer matrices and the photon correlation functions built from them.
//!
//! A photon entering input port `n` leaves in the superposition
//! `a†_n → Σ_i g_ni a†_i`. Two photons at inputs `l ≠ k` are detected in
//! coincidence at outputs `m, n` with probability
//! `Γ_mn = |g_lm g_kn + g_ln g_km|²`; a single photon at input `i` exits at
//! `n` with probability `Γ_n = |g_in|²`.
//!
//! The diagonal of the two-fold matrix follows the printed convention
//! `Γ_mm = |g_lm g_km|²`, which is half the physical double-occupancy
//! probability. [`two_photon_oracle`] gives the normalized Fock-state
//! amplitudes for comparison.
//!
//! Ports are numbered from 1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Complex transfer matrix, `g[[n, i]]` = amplitude from input `n` to output `i`
/// (stored 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    g: Array2<Complex64>,
    /// Free-space wavelength in µm.
    pub wavelength: f64,
}

impl TransferMatrix {
    pub fn new(g: Array2<Complex64>, wavelength: f64) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::arg("transfer matrix is empty"));
        }
        if g.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::arg("transfer matrix has non-finite entries"));
        }
        Ok(Self { g, wavelength })
    }

    /// Build from rows, one per input port.
    pub fn from_rows(rows: &[Vec<Complex64>], wavelength: f64) -> Result<Self> {
        let n_out = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_out) {
            return Err(Error::arg("transfer matrix rows differ in length"));
        }
        let g = Array2::from_shape_fn((rows.len(), n_out), |(a, b)| rows[a][b]);
        Self::new(g, wavelength)
    }

    pub fn identity(n: usize, wavelength: f64) -> Self {
        Self {
            g: Array2::from_shape_fn((n, n), |(a, b)| {
                if a == b {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
            wavelength,
        }
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.g
    }

    pub fn n_inputs(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.g.ncols()
    }

    fn check_input(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_inputs() {
            return Err(Error::arg(format!("input port {n} outside 1..={}", self.n_inputs())));
        }
        Ok(())
    }

    /// `g_ni` with 1-based ports.
    pub fn get(&self, n: usize, i: usize) -> Result<Complex64> {
        self.check_input(n)?;
        if i == 0 || i > self.n_outputs() {
            return Err(Error::arg(format!("output port {i} outside 1..={}", self.n_outputs())));
        }
        Ok(self.g[[n - 1, i - 1]])
    }

    /// `Σ_i |g_ni|²`, the power leaving through the outputs for input `n`.
    pub fn row_norm_sq(&self, n: usize) -> Result<f64> {
        self.check_input(n)?;
        Ok(self.g.row(n - 1).iter().map(|v| v.norm_sqr()).sum())
    }

    /// Rows whose norm exceeds `1 + tol` make the device gain power.
    pub fn check_passive(&self, tol: f64) -> Result<()> {
        for n in 1..=self.n_inputs() {
            let s = self.row_norm_sq(n)?;
            if s > 1.0 + tol {
                return Err(Error::arg(format!("row {n} carries {s:.6} > 1 of the input power")));
            }
        }
        Ok(())
    }

    /// Multiply every entry by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            g: self.g.mapv(|v| v * factor),
            wavelength: self.wavelength,
        }
    }
}

/// Dual-rail encoding: each qubit occupies an ordered (top, bottom) port pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct QubitEncoding {
    qubits: Vec<(usize, usize)>,
}

impl TryFrom<Vec<(usize, usize)>> for QubitEncoding {
    type Error = Error;

    fn try_from(qubits: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(qubits)
    }
}

impl From<QubitEncoding> for Vec<(usize, usize)> {
    fn from(e: QubitEncoding) -> Self {
        e.qubits
    }
}

impl QubitEncoding {
    pub fn new(qubits: Vec<(usize, usize)>) -> Result<Self> {
        if qubits.is_empty() {
            return Err(Error::arg("an encoding needs at least one qubit"));
        }
        let mut seen: Vec<usize> = qubits.iter().flat_map(|&(a, b)| [a, b]).collect();
        if seen.contains(&0) {
            return Err(Error::arg("ports are numbered from 1"));
        }
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("qubit port pairs must be disjoint"));
        }
        Ok(Self { qubits })
    }

    pub fn qubits(&self) -> &[(usize, usize)] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn max_port(&self) -> usize {
        self.qubits.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0)
    }
}

/// Computational basis state, one bit per qubit (first qubit first).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LogicState {
    bits: Vec<bool>,
}

impl LogicState {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Occupied port per qubit: top for 0, bottom for 1.
    pub fn occupied(&self, enc: &QubitEncoding) -> Result<Vec<usize>> {
        if self.bits.len() != enc.len() {
            return Err(Error::arg(format!(
                "state {self} has {} bits but the encoding has {} qubits",
                self.bits.len(),
                enc.len()
            )));
        }
        Ok(self
            .bits
            .iter()
            .zip(enc.qubits())
            .map(|(&b, &(top, bottom))| if b { bottom } else { top })
            .collect())
    }
}

impl FromStr for LogicState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::arg(format!("logic state {s:?} must contain only 0 and 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::arg("empty logic state"));
        }
        Ok(Self { bits })
    }
}

impl TryFrom<String> for LogicState {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LogicState> for String {
    fn from(s: LogicState) -> Self {
        s.to_string()
    }
}

impl fmt::Display for LogicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Gate definition: encodings on both sides and the truth table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub name: String,
    pub input: QubitEncoding,
    pub output: QubitEncoding,
    pub table: Vec<(LogicState, LogicState)>,
}

fn state(s: &str) -> LogicState {
    s.parse().expect("literal logic state")
}

impl GateSpec {
    /// Check that the table is non-empty, consistent with the encodings and
    /// free of duplicate inputs.
    pub fn new(
        name: impl Into<String>,
        input: QubitEncoding,
        output: QubitEncoding,
        table: Vec<(LogicState, LogicState)>,
    ) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::arg("truth table is empty"));
        }
        if input.len() != output.len() {
            return Err(Error::arg("input and output encodings differ in qubit count"));
        }
        if !(1..=2).contains(&input.len()) {
            return Err(Error::arg("only one- and two-qubit gates are supported"));
        }
        for (i, (a, b)) in table.iter().enumerate() {
            a.occupied(&input)?;
            b.occupied(&output)?;
            if table[..i].iter().any(|(x, _)| x == a) {
                return Err(Error::arg(format!("input {a} appears twice in the truth table")));
            }
        }
        Ok(Self {
            name: name.into(),
            input,
            output,
            table,
        })
    }

    /// Controlled NOT: control on ports (1, 2), target on ports (3, 4).
    pub fn cnot() -> Self {
        let enc = QubitEncoding::new(vec![(1, 2), (3, 4)]).expect("fixed encoding");
        let table = [("00", "00"), ("01", "01"), ("10", "11"), ("11", "10")]
            .iter()
            .map(|&(a, b)| (state(a), state(b)))
            .collect();
        Self::new("cnot", enc.clone(), enc, table).expect("fixed table")
    }

    /// Single-qubit NOT on ports (1, 2).
    pub fn xgate() -> Self {
        let enc = QubitEncoding::new(vec![(1, 2)]).expect("fixed encoding");
        let table = vec![(state("0"), state("1")), (state("1"), state("0"))];
        Self::new("xgate", enc.clone(), enc, table).expect("fixed table")
    }

    pub fn qubit_count(&self) -> usize {
        self.input.len()
    }

    pub fn target(&self, input: &LogicState) -> Result<&LogicState> {
        self.table
            .iter()
            .find(|(a, _)| a == input)
            .map(|(_, b)| b)
            .ok_or_else(|| Error::arg(format!("input {input} is not in the {} truth table", self.name)))
    }

    /// Occupied input ports and target output ports of every row.
    pub fn port_rows(&self) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        self.table
            .iter()
            .map(|(a, b)| Ok((a.occupied(&self.input)?, b.occupied(&self.output)?)))
            .collect()
    }

    /// Fail unless `g` has every port the spec refers to.
    pub fn check_ports(&self, g: &TransferMatrix) -> Result<()> {
        if self.input.max_port() > g.n_inputs() || self.output.max_port() > g.n_outputs() {
            return Err(Error::arg(format!(
                "gate {} needs {} inputs and {} outputs but the transfer matrix is {}x{}",
                self.name,
                self.input.max_port(),
                self.output.max_port(),
                g.n_inputs(),
                g.n_outputs()
            )));
        }
        Ok(())
    }
}

/// Two-fold correlation matrix over output ports for inputs `(l, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    pub inputs: (usize, usize),
}

impl CorrelationMatrix {
    /// `Γ_mn` with 1-based ports.
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[[m - 1, n - 1]]
    }
}

/// One-fold correlation vector over output ports for input `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVector {
    pub values: Vec<f64>,
    pub input: usize,
}

impl CorrelationVector {
    pub fn get(&self, n: usize) -> f64 {
        self.values[n - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Correlation {
    OneFold(CorrelationVector),
    TwoFold(CorrelationMatrix),
}

/// `Γ_mn = |g_lm g_kn + g_ln g_km|²` off the diagonal, `Γ_mm = |g_lm g_km|²` on it.
pub fn twofold_correlation(g: &TransferMatrix, l: usize, k: usize) -> Result<CorrelationMatrix> {
    if l == k {
        return Err(Error::arg(format!("two-fold correlation needs distinct inputs, got {l} twice")));
    }
    g.check_input(l)?;
    g.check_input(k)?;
    let gl = g.g.row(l - 1);
    let gk = g.g.row(k - 1);
    let n = g.n_outputs();
    let mut values = Array2::zeros((n, n));
    for m in 0..n {
        values[[m, m]] = (gl[m] * gk[m]).norm_sqr();
        for q in m + 1..n {
            let v = (gl[m] * gk[q] + gl[q] * gk[m]).norm_sqr();
            values[[m, q]] = v;
            values[[q, m]] = v;
        }
    }
    Ok(CorrelationMatrix { values, inputs: (l, k) })
}

/// `Γ_n = |g_in|²`.
pub fn onefold_correlation(g: &TransferMatrix, i: usize) -> Result<CorrelationVector> {
    g.check_input(i)?;
    Ok(CorrelationVector {
        values: g.g.row(i - 1).iter().map(|v| v.norm_sqr()).collect(),
        input: i,
    })
}

/// Two-photon output state over unordered port pairs `(m ≤ n)`.
///
/// `coefficients` holds the coefficient of the creation-operator monomial
/// `a†_m a†_n`; the normalized Fock amplitude carries an extra `√2` when
/// `m = n` because `(a†)²|0⟩ = √2|2⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    pub inputs: (usize, usize),
    pub coefficients: BTreeMap<(usize, usize), Complex64>,
}

impl TwoPhotonState {
    fn key(m: usize, n: usize) -> (usize, usize) {
        (m.min(n), m.max(n))
    }

    /// Normalized Fock-state amplitude.
    pub fn amplitude(&self, m: usize, n: usize) -> Complex64 {
        let c = self.coefficients.get(&Self::key(m, n)).copied().unwrap_or_default();
        if m == n {
            c * 2f64.sqrt()
        } else {
            c
        }
    }

    /// Probability of detecting the photons at `m` and `n` (any order).
    pub fn probability(&self, m: usize, n: usize) -> f64 {
        let p = self.coefficients.get(&Self::key(m, n)).map_or(0.0, |c| c.norm_sqr());
        // occupation factorial 2! for a doubly occupied port
        if m == n {
            2.0 * p
        } else {
            p
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coefficients.keys().map(|&(m, n)| self.probability(m, n)).sum()
    }
}

/// Expand `(Σ_i g_li a†_i)(Σ_j g_kj a†_j)|0⟩` in the Fock basis.
pub fn two_photon_oracle(g: &TransferMatrix, l: usize, k: usize) -> Result<TwoPhotonState> {
    if l == k {
        return Err(Error::arg(format!("two-photon state needs distinct inputs, got {l} twice")));
    }
    let n = g.n_outputs();
    let mut coefficients: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for i in 1..=n {
        for j in 1..=n {
            let c = g.get(l, i)? * g.get(k, j)?;
            *coefficients.entry(TwoPhotonState::key(i, j)).or_default() += c;
        }
    }
    Ok(TwoPhotonState { inputs: (l, k), coefficients })
}

/// Correlation for one truth-table input: one-fold for one qubit, two-fold
/// for two.
pub fn correlation_for(g: &TransferMatrix, spec: &GateSpec, input: &LogicState) -> Result<Correlation> {
    let ports = input.occupied(&spec.input)?;
    match ports.as_slice() {
        [i] => Ok(Correlation::OneFold(onefold_correlation(g, *i)?)),
        [l, k] => Ok(Correlation::TwoFold(twofold_correlation(g, *l, *k)?)),
        _ => Err(Error::arg("only one- and two-qubit gates are supported")),
    }
}

/// Success probability of `input`: the correlation element at its target ports.
pub fn gate_success(corr: &Correlation, spec: &GateSpec, input: &LogicState) -> Result<f64> {
    let target = spec.target(input)?.occupied(&spec.output)?;
    match (corr, target.as_slice()) {
        (Correlation::OneFold(v), [n]) if *n <= v.values.len() => Ok(v.get(*n)),
        (Correlation::TwoFold(c), [m, n]) if *m.max(n) <= c.values.nrows() => Ok(c.get(*m, *n)),
        _ => Err(Error::arg(format!(
            "correlation does not match the {}-qubit target of gate {}",
            target.len(),
            spec.name
        ))),
    }
}

/// Success of one truth-table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowSuccess {
    pub input: LogicState,
    pub target: LogicState,
    pub success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthTableReport {
    pub rows: Vec<RowSuccess>,
    /// Worst row, the gate's quoted success rate.
    pub min: f64,
}

pub fn truth_table_eval(g: &TransferMatrix, spec: &GateSpec) -> Result<TruthTableReport> {
    spec.check_ports(g)?;
    let rows = spec
        .table
        .iter()
        .map(|(a, b)| {
            let corr = correlation_for(g, spec, a)?;
            Ok(RowSuccess {
                input: a.clone(),
                target: b.clone(),
                success: gate_success(&corr, spec, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min = rows.iter().map(|r| r.success).fold(f64::INFINITY, f64::min);
    Ok(TruthTableReport { rows, min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn splitter() -> TransferMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        TransferMatrix::from_rows(&[vec![c(s, 0.0), c(0.0, s)], vec![c(0.0, s), c(s, 0.0)]], 1.55).unwrap()
    }

    fn arb_matrix(n: usize) -> impl Strategy<Value = TransferMatrix> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
            let rows: Vec<Vec<Complex64>> = v.chunks(n).map(|r| r.iter().map(|&(a, b)| c(a, b)).collect()).collect();
            TransferMatrix::from_rows(&rows, 1.55).unwrap()
        })
    }

    #[test]
    fn identity_two_fold() {
        let g = TransferMatrix::identity(4, 1.55);
        let gam = twofold_correlation(&g, 2, 3).unwrap();
        for m in 1..=4 {
            for n in 1..=4 {
                let expect = if (m, n) == (2, 3) || (m, n) == (3, 2) { 1.0 } else { 0.0 };
                assert_eq!(gam.get(m, n), expect);
            }
        }
    }

    #[test]
    fn hong_ou_mandel() {
        let gam = twofold_correlation(&splitter(), 1, 2).unwrap();
        assert!(gam.get(1, 2).abs() < 1e-15);
        assert!((gam.get(1, 1) - 0.25).abs() < 1e-15);
        assert!((gam.get(2, 2) - 0.25).abs() < 1e-15);
        let psi = two_photon_oracle(&splitter(), 1, 2).unwrap();
        assert!((psi.probability(1, 1) - 0.5).abs() < 1e-15);
        assert!((psi.probability(2, 2) - 0.5).abs() < 1e-15);
        assert!(psi.probability(1, 2) < 1e-30);
    }

    #[test]
    fn identity_oracle_has_one_pair() {
        let psi = two_photon_oracle(&TransferMatrix::identity(4, 1.55), 1, 3).unwrap();
        let nonzero: Vec<_> = psi.coefficients.iter().filter(|(_, a)| a.norm() > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(*nonzero[0].0, (1, 3));
        assert_eq!(psi.amplitude(1, 3).norm(), 1.0);
        assert_eq!(psi.norm_sq(), 1.0);
    }

    #[test]
    fn same_input_twice_is_rejected() {
        let g = TransferMatrix::identity(2, 1.55);
        assert!(matches!(twofold_correlation(&g, 1, 1), Err(Error::Argument(_))));
        assert!(matches!(two_photon_oracle(&g, 2, 2), Err(Error::Argument(_))));
        assert!(onefold_correlation(&g, 3).is_err());
    }

    #[test]
    fn one_fold_values() {
        let g = TransferMatrix::identity(2, 1.55);
        assert_eq!(onefold_correlation(&g, 1).unwrap().values, vec![1.0, 0.0]);
        let g = TransferMatrix::from_rows(&[vec![c(0.6, 0.0), c(0.0, 0.8)], vec![c(0.0, 0.0), c(1.0, 0.0)]], 1.55).unwrap();
        let v = onefold_correlation(&g, 1).unwrap();
        assert!((v.values[0] - 0.36).abs() < 1e-15 && (v.values[1] - 0.64).abs() < 1e-15);
    }

    #[test]
    fn cnot_truth_table_on_identity() {
        let g = TransferMatrix::identity(4, 1.55);
        let spec = GateSpec::cnot();
        let corr = correlation_for(&g, &spec, &state("00")).unwrap();
        assert_eq!(gate_success(&corr, &spec, &state("00")).unwrap(), 1.0);
        let r = truth_table_eval(&g, &spec).unwrap();
        let s: Vec<f64> = r.rows.iter().map(|r| r.success).collect();
        // identity passes the rows where the target is untouched
        assert_eq!(s, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(r.min, 0.0);
    }

    #[test]
    fn cnot_ports() {
        let rows = GateSpec::cnot().port_rows().unwrap();
        let expect = [
            (vec![1, 3], vec![1, 3]),
            (vec![1, 4], vec![1, 4]),
            (vec![2, 3], vec![2, 4]),
            (vec![2, 4], vec![2, 3]),
        ];
        assert_eq!(rows, expect);
    }

    #[test]
    fn xgate_truth_tables() {
        let spec = GateSpec::xgate();
        let r = truth_table_eval(&TransferMatrix::identity(2, 1.55), &spec).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.success).collect::<Vec<_>>(), vec![0.0, 0.0]);
        let swap = TransferMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]], 1.55).unwrap();
        let r = truth_table_eval(&swap, &spec).unwrap();
        assert_eq!(r.rows.iter().map(|r| r.success).collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert_eq!(r.min, 1.0);
    }

    #[test]
    fn unknown_input_is_rejected() {
        let spec = GateSpec::xgate();
        let g = TransferMatrix::identity(2, 1.55);
        let corr = Correlation::OneFold(onefold_correlation(&g, 1).unwrap());
        assert!(matches!(gate_success(&corr, &spec, &state("00")), Err(Error::Argument(_))));
        assert!(matches!(truth_table_eval(&g, &GateSpec::cnot()), Err(Error::Argument(_))));
    }

    #[test]
    fn encoding_validation() {
        assert!(QubitEncoding::new(vec![(1, 2), (2, 3)]).is_err());
        assert!(QubitEncoding::new(vec![(0, 1)]).is_err());
        assert!("012".parse::<LogicState>().is_err());
        let spec = GateSpec::cnot();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GateSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn passivity_check() {
        let g = TransferMatrix::from_rows(&[vec![c(0.9, 0.0), c(0.5, 0.0)]], 1.55).unwrap();
        assert!(g.check_passive(1e-9).is_err());
        assert!(splitter().check_passive(1e-12).is_ok());
    }

    proptest! {
        #[test]
        fn two_fold_is_symmetric_and_nonnegative(g in arb_matrix(4), l in 1usize..=4, dk in 1usize..4) {
            let k = (l - 1 + dk) % 4 + 1;
            let gam = twofold_correlation(&g, l, k).unwrap();
            prop_assert!(gam.values == gam.values.t());
            prop_assert!(gam.values.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn global_phase_is_irrelevant(g in arb_matrix(4), phi in 0.0f64..6.28) {
            // passive scale: every row norm at most 1
            let top = (1..=4).map(|n| g.row_norm_sq(n).unwrap()).fold(0.0, f64::max).sqrt();
            let g = g.scaled(Complex64::new(1.0 / top, 0.0));
            let h = g.scaled(Complex64::from_polar(1.0, phi));
            let a = twofold_correlation(&g, 1, 3).unwrap();
            let b = twofold_correlation(&h, 1, 3).unwrap();
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
            let a = onefold_correlation(&g, 2).unwrap();
            let b = onefold_correlation(&h, 2).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-15);
            }
        }

        #[test]
        fn oracle_matches_off_diagonal(g in arb_matrix(4)) {
            let gam = twofold_correlation(&g, 2, 4).unwrap();
            let psi = two_photon_oracle(&g, 2, 4).unwrap();
            for m in 1..=4 {
                for n in m + 1..=4 {
                    prop_assert!((gam.get(m, n) - psi.probability(m, n)).abs() < 1e-12);
                }
                prop_assert_eq!(psi.probability(m, m), 2.0 * gam.get(m, m));
            }
        }

        #[test]
        fn success_reads_the_target_element(g in arb_matrix(4)) {
            let spec = GateSpec::cnot();
            let r = truth_table_eval(&g, &spec).unwrap();
            for (row, (ins, outs)) in r.rows.iter().zip(spec.port_rows().unwrap()) {
                let psi = two_photon_oracle(&g, ins[0], ins[1]).unwrap();
                prop_assert!((row.success - psi.probability(outs[0], outs[1])).abs() < 1e-12);
            }
        }
    }
}
