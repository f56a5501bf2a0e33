//! Butcher tableaux for DIRK schemes: validation, built-in catalog,
//! confluent-stage reduction, and a line-oriented text format.
//!
//! The abscissa vector is always derived as the row sums `c = A e`; it is never
//! read from input, so the stage-time consistency assumption cannot be violated
//! by a file.

use std::fmt::Write as _;
use thiserror::Error;

/// Where a tableau came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Builtin,
    File,
    Search,
}

/// An `s`-stage DIRK Butcher tableau `(A, b, c)` with `A` lower triangular.
#[derive(Clone, Debug, PartialEq)]
pub struct Tableau {
    s: usize,
    a: Vec<f64>, // row-major s x s, zero above the diagonal
    b: Vec<f64>,
    c: Vec<f64>, // always the row sums of A
    label: String,
    source: Source,
}

#[derive(Debug, Error)]
pub enum TableauError {
    #[error("dimension mismatch: A is {rows}x{cols}, b has length {blen}")]
    Dimensions { rows: usize, cols: usize, blen: usize },
    #[error("A is not lower triangular: a[{i}][{j}] = {value:e}")]
    NotLowerTriangular { i: usize, j: usize, value: f64 },
    #[error("non-finite entry at {place}")]
    NonFinite { place: String },
    #[error("empty tableau")]
    Empty,
    #[error("unknown built-in scheme `{0}`")]
    UnknownBuiltin(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Entries above the diagonal larger than this are structure violations;
/// smaller ones are treated as exact zeros.
pub const UPPER_TRIANGLE_TOL: f64 = 1e-14;

/// Absolute tolerance for detecting coinciding leading abscissae.
pub const CONFLUENCE_TOL: f64 = 1e-12;

/// Build a [`Tableau`] from a raw square coefficient array and weight vector.
///
/// `c` is computed as the row sums of `A`. Rejects non-square input, entries
/// above the diagonal with magnitude exceeding [`UPPER_TRIANGLE_TOL`], and
/// non-finite values.
pub fn validate(raw_a: &[Vec<f64>], raw_b: &[f64], label: &str) -> Result<Tableau, TableauError> {
    let s = raw_a.len();
    if s == 0 {
        return Err(TableauError::Empty);
    }
    for (i, row) in raw_a.iter().enumerate() {
        if row.len() != s {
            return Err(TableauError::Dimensions {
                rows: s,
                cols: row.len(),
                blen: raw_b.len(),
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(TableauError::NonFinite {
                    place: format!("a[{i}][{j}]"),
                });
            }
            if j > i && v.abs() > UPPER_TRIANGLE_TOL {
                return Err(TableauError::NotLowerTriangular { i, j, value: v });
            }
        }
    }
    if raw_b.len() != s {
        return Err(TableauError::Dimensions {
            rows: s,
            cols: s,
            blen: raw_b.len(),
        });
    }
    for (j, &v) in raw_b.iter().enumerate() {
        if !v.is_finite() {
            return Err(TableauError::NonFinite {
                place: format!("b[{j}]"),
            });
        }
    }
    let mut a = vec![0.0; s * s];
    for i in 0..s {
        for j in 0..=i {
            a[i * s + j] = raw_a[i][j];
        }
    }
    Ok(Tableau::from_parts(s, a, raw_b.to_vec(), label.to_string(), Source::File))
}

impl Tableau {
    fn from_parts(s: usize, a: Vec<f64>, b: Vec<f64>, label: String, source: Source) -> Self {
        let mut c = vec![0.0; s];
        for i in 0..s {
            c[i] = a[i * s..i * s + i + 1].iter().sum();
        }
        Tableau { s, a, b, c, label, source }
    }

    /// Stage count.
    pub fn s(&self) -> usize {
        self.s
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    pub fn a_row(&self, i: usize) -> &[f64] {
        &self.a[i * self.s..(i + 1) * self.s]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    pub fn set_source(&mut self, source: Source) {
        self.source = source;
    }

    /// Largest coefficient magnitude over `A` and `b`.
    pub fn max_coeff(&self) -> f64 {
        self.a
            .iter()
            .chain(self.b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Exact (bitwise) equality of `b` and the last row of `A`.
    pub fn stiffly_accurate(&self) -> bool {
        let last = self.a_row(self.s - 1);
        last.iter().zip(&self.b).all(|(x, y)| x == y)
    }

    /// `out = A * v`.
    pub fn apply_a(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.s {
            out[i] = self.a_row(i)[..=i]
                .iter()
                .zip(&v[..=i])
                .map(|(aij, vj)| aij * vj)
                .sum();
        }
    }
}

/// Outcome of the confluent-stage reduction.
#[derive(Clone, Debug)]
pub struct ReductionReport {
    pub reducible: bool,
    /// Number of coinciding leading stages merged (0 when irreducible).
    pub r: usize,
    pub reduced: Option<Tableau>,
}

/// Detect `r >= 2` coinciding leading abscissae and merge them into one stage.
///
/// When the first `r` abscissae coincide (within [`CONFLUENCE_TOL`]) the first
/// `r` stages all solve the same stage equation, so the scheme is equivalent to
/// one with a single leading stage: the merged row sums the original block
/// columns, and the merged weight is the sum of the leading weights.
pub fn reduce_confluent(t: &Tableau) -> ReductionReport {
    let s = t.s();
    let mut r = 1;
    while r < s && (t.c()[r] - t.c()[0]).abs() <= CONFLUENCE_TOL {
        r += 1;
    }
    if r < 2 {
        return ReductionReport { reducible: false, r: 0, reduced: None };
    }
    let ns = s - r + 1;
    let mut a = vec![0.0; ns * ns];
    a[0] = t.a(0, 0);
    for i in r..s {
        let ni = i - r + 1;
        // merged first column: row sum over the leading block
        a[ni * ns] = (0..r).map(|j| t.a(i, j)).sum();
        for j in r..=i {
            a[ni * ns + (j - r + 1)] = t.a(i, j);
        }
    }
    let mut b = vec![0.0; ns];
    b[0] = t.b()[..r].iter().sum();
    b[1..].copy_from_slice(&t.b()[r..]);
    let reduced = Tableau::from_parts(
        ns,
        a,
        b,
        format!("{}_reduced", t.label()),
        t.source().clone(),
    );
    ReductionReport { reducible: true, r, reduced: Some(reduced) }
}

// ---------------------------------------------------------------------------
// Built-in catalog
// ---------------------------------------------------------------------------

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 7] = [
    "dirk744",
    "dirk1254",
    "dirk1255",
    "dirk541",
    "dirk551",
    "backward_euler",
    "crank_nicolson_dirk",
];

/// 7-stage, order 4, weak stage order 4; stiffly accurate and L-stable.
const A744: [&[f64]; 7] = [
    &[1.290066345260422e-01],
    &[3.315354455306989e-01, 1.177478680001996e-01],
    &[-8.009819642882672e-02, -2.408450965101765e-03, 9.242630648045402e-02],
    &[-1.730636616639455e+00, 1.513225984674677e+00, 1.221258626309848e+00, 2.266279031096887e-01],
    &[1.475353790517696e-01, 3.618481772236499e-01, -5.603544220240282e-01, 2.455453653222619e+00, 5.742190161395324e-01],
    &[2.099717815888321e-01, 7.120237463672882e-01, -2.012023940726332e-02, -1.913828539529156e-02, -5.556044541810300e-03, 3.707277349712966e-01],
    &[2.387938238483883e-01, 4.762495400483653e-01, 1.233935151213300e-02, 6.011995982693821e-02, 6.553618225489034e-05, -1.270730910442124e-01, 3.395048796261326e-01],
];

/// 12-stage, order 5, weak stage order 4; stiffly accurate and L-stable.
const A1254: [&[f64]; 12] = [
    &[2.345371908646273e-01],
    &[6.874344413888787e-01, 5.515270980695153e-02],
    &[-1.183552669539587e-01, 5.463563002913454e-03, 1.458584459918280e-01],
    &[-1.832235204042292e-01, 5.269029412008775e-02, 8.203685085133529e-01, 4.812118949092085e-02],
    &[9.941572060659400e-02, 4.977904930055774e-03, 5.414758174284321e-02, -1.666571741820749e-03, 8.078975617332473e-02],
    &[-9.896614721582678e-01, 2.860682690577833e+00, -1.236119341063179e+00, 2.130219523351530e+00, -1.260655031676537e+00, 2.457717913099987e-01],
    &[-5.656238413439102e-02, 1.661985685769353e-01, 6.464600922362508e-01, 6.608854962269927e-01, 3.736054198873429e-01, 6.294456964407685e-01, 5.702752607818027e-01],
    &[8.048962104724392e-01, -6.232034990249100e-02, 5.737234603323347e-01, -9.613723511489970e-02, 5.524106361737929e-01, 5.961002486833255e-01, 1.978411600659203e-01, 3.156238724024008e-01],
    &[-1.606381759216300e-01, 6.833397073337708e-01, 4.734578665308685e-01, 8.037708984872738e-01, -1.094498069459834e-02, 6.151263362711297e-01, 3.908946848682723e-01, 8.966103265353116e-02, 2.973255537857041e-02],
    &[7.074283235644631e-01, 4.392037300952482e-01, -3.623592480237268e-02, 7.189990308645932e-04, 5.820968279166545e-01, 3.302003177175218e-01, -2.394564021215881e-01, -7.540283547997615e-03, 1.702137469523672e-01, 6.268780138721711e-01],
    &[1.361197981133694e-01, -7.486549901902831e-01, 1.893908350024949e+00, 3.940485196730028e-01, 6.240233526545023e-02, 7.511983862200027e-01, -5.283465265730526e-01, -1.661625677872943e+00, 9.998723833190827e-01, 1.377776742457387e+00, 8.905676409277480e-01],
    &[-7.433675378768276e-01, 1.490594423766965e-01, -2.042884056742363e-02, 8.565329438087443e-04, 1.357261590983184e+00, 2.067512027776675e-03, 9.836884265759428e-02, -1.357936974507222e-02, -5.428992174996300e-02, -3.803299038293005e-02, -9.150525836295019e-03, 2.712352651694511e-01],
];

/// 12-stage, order 5, weak stage order 5; stiffly accurate and L-stable.
const A1255: [&[f64]; 12] = [
    &[4.113473525867655e-02],
    &[1.603459327727949e-01, 6.663913326722831e-02],
    &[-3.424389044264752e-01, 8.658006324816373e-01, 9.893519116923277e-02],
    &[9.437182028870806e+00, -1.088783359642350e+01, 2.644025436733866e+00, 1.846155800500574e-01],
    &[-3.425409029430815e-01, 5.172239272544332e-01, 9.163589909678043e-01, 5.225142808845742e-02, 1.165485436026433e-01],
    &[-2.094441177460360e+00, 2.577655753533404e+00, 5.704405293326313e-01, 1.213637180023516e-01, -4.752289775376601e-01, 5.285605969257756e-01],
    &[3.391631788320480e-01, -2.797427027028997e-01, 1.039483063369094e+00, 5.978770926212172e-02, -2.132900327070380e-01, 8.344318363436753e-02, 2.410106515779412e-01],
    &[5.904282488642163e+00, 3.171195765985073e+00, -1.236822836316587e+01, -4.989519066913001e-01, 2.160529620826442e+00, 1.916104322021480e+00, 1.988059486291180e+00, 2.232092386922440e-01],
    &[4.616443509508975e-01, -1.933433560549238e-01, -1.212541486279519e-01, 6.662362039716674e-02, 4.254912950625259e-01, 7.856131647013712e-01, 8.369551389357689e-01, 1.604780447895926e-01, 3.616125951766939e-01],
    &[-7.087669749878204e-01, 6.466527094491541e-01, 4.758821526542215e-01, -2.570518451375722e-01, 1.123185062554392e+00, 5.546921612875290e-01, 3.192424333237050e-01, 3.612077612576969e-01, 5.866779836068974e-01, 2.353799736246102e-01],
    &[4.264162484855930e-01, 1.322816663477840e+00, 4.245673729758231e-01, -2.530402764527700e+00, -7.822016897497742e-02, 1.054463080605071e+00, 4.645590541391895e-01, 1.145097379521439e+00, 4.301337846893282e-01, 1.499513057076809e+00, 1.447942640822165e-02],
    &[1.207394392845339e-02, 5.187080074649261e-01, 1.121304244847239e-01, -4.959806334780896e-03, -1.345031364651444e+00, 3.398828703760807e-01, 8.159251531671077e-01, -2.640104266439604e-03, 1.439060901763520e-02, -6.556567796749947e-03, 6.548135446843367e-04, 5.454220210658036e-01],
];

/// Fetch a built-in scheme by name.
///
/// `dirk744`, `dirk1254`, `dirk1255` are the high-WSO schemes; `dirk541`
/// (5-stage SDIRK of order 4, Hairer–Wanner) and `dirk551` (5-stage SDIRK of
/// order 5, Kennedy–Carpenter review) are WSO-1 reference methods transcribed
/// from the literature; `backward_euler` and `crank_nicolson_dirk` are
/// elementary cases.
pub fn builtin(name: &str) -> Result<Tableau, TableauError> {
    let (rows, b, label): (Vec<Vec<f64>>, Vec<f64>, &str) = match name {
        "dirk744" => {
            let rows: Vec<Vec<f64>> = A744.iter().map(|r| r.to_vec()).collect();
            let b = rows.last().unwrap().clone();
            (rows, b, "DIRK-(7,4,4)")
        }
        "dirk1254" => {
            let rows: Vec<Vec<f64>> = A1254.iter().map(|r| r.to_vec()).collect();
            let b = rows.last().unwrap().clone();
            (rows, b, "DIRK-(12,5,4)")
        }
        "dirk1255" => {
            let rows: Vec<Vec<f64>> = A1255.iter().map(|r| r.to_vec()).collect();
            let b = rows.last().unwrap().clone();
            (rows, b, "DIRK-(12,5,5)")
        }
        "dirk541" => {
            // Hairer-Wanner SDIRK, gamma = 1/4: order 4, stiffly accurate, L-stable.
            let rows = vec![
                vec![0.25],
                vec![0.5, 0.25],
                vec![17.0 / 50.0, -1.0 / 25.0, 0.25],
                vec![371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25],
                vec![25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25],
            ];
            let b = rows.last().unwrap().clone();
            (rows, b, "DIRK-(5,4,1) [transcribed: Hairer-Wanner SDIRK gamma=1/4]")
        }
        "dirk551" => {
            // Kennedy-Carpenter review SDIRK: order 5, A-stable, not stiffly accurate.
            let g = 4024571134387.0 / 14474071345096.0;
            let rows = vec![
                vec![g],
                vec![9365021263232.0 / 12572342979331.0, g],
                vec![2144716224527.0 / 9320917548702.0, -397905335951.0 / 4008788611757.0, g],
                vec![
                    -291541413000.0 / 6267936762551.0,
                    226761949132.0 / 4473940808273.0,
                    -1282248297070.0 / 9697416712681.0,
                    g,
                ],
                vec![
                    -2481679516057.0 / 4626464057815.0,
                    -197112422687.0 / 6604378783090.0,
                    3952887910906.0 / 9713059315593.0,
                    4906835613583.0 / 8134926921134.0,
                    g,
                ],
            ];
            let b = vec![
                -2522702558582.0 / 12162329469185.0,
                1018267903655.0 / 12907234417901.0,
                4542392826351.0 / 13702606430957.0,
                5001116467727.0 / 12224457745473.0,
                1509636094297.0 / 3891594770934.0,
            ];
            (rows, b, "DIRK-(5,5,1) [transcribed: Kennedy-Carpenter SDIRK5]")
        }
        "backward_euler" => (vec![vec![1.0]], vec![1.0], "backward Euler"),
        "crank_nicolson_dirk" => (
            vec![vec![0.0, 0.0], vec![0.5, 0.5]],
            vec![0.5, 0.5],
            "Crank-Nicolson (DIRK form)",
        ),
        other => return Err(TableauError::UnknownBuiltin(other.to_string())),
    };
    let s = rows.len();
    let mut a = vec![0.0; s * s];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            a[i * s + j] = v;
        }
    }
    let mut t = Tableau::from_parts(s, a, b, label.to_string(), Source::Builtin);
    t.set_label(label);
    Ok(t)
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

/// Serialize to the line-oriented text format.
///
/// Line 1 `s <int>`, line 2 `label <text>`, then row `i` of `A` with `i`
/// entries in `%.16e`, then a `b` line with `s` entries. The abscissae appear
/// only as a `# c ...` comment.
pub fn to_text(t: &Tableau) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "s {}", t.s());
    let _ = writeln!(out, "label {}", t.label());
    for i in 0..t.s() {
        let row: Vec<String> = (0..=i).map(|j| format!("{:.16e}", t.a(i, j))).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let bs: Vec<String> = t.b().iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(out, "b {}", bs.join(" "));
    let cs: Vec<String> = t.c().iter().map(|v| format!("{v:.16e}")).collect();
    let _ = writeln!(out, "# c {}", cs.join(" "));
    out
}

/// Parse the text format produced by [`to_text`]. Comment lines begin with `#`.
pub fn from_text(text: &str) -> Result<Tableau, TableauError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let perr = |line: usize, msg: String| TableauError::Parse { line: line + 1, msg };

    let (ln, first) = lines.next().ok_or(perr(0, "empty input".into()))?;
    let s: usize = first
        .trim()
        .strip_prefix("s ")
        .ok_or_else(|| perr(ln, "expected `s <stages>`".into()))?
        .trim()
        .parse()
        .map_err(|e| perr(ln, format!("bad stage count: {e}")))?;
    if s == 0 {
        return Err(perr(ln, "stage count must be positive".into()));
    }

    let (ln, second) = lines.next().ok_or(perr(1, "missing label line".into()))?;
    let label = second
        .trim()
        .strip_prefix("label")
        .ok_or_else(|| perr(ln, "expected `label <text>`".into()))?
        .trim()
        .to_string();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| perr(2 + i, format!("missing row {} of A", i + 1)))?;
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| perr(ln, format!("bad numeric entry: {e}")))?;
        if vals.len() != i + 1 {
            return Err(perr(
                ln,
                format!("row {} of A must have {} entries, found {}", i + 1, i + 1, vals.len()),
            ));
        }
        let mut full = vals;
        full.resize(s, 0.0);
        rows.push(full);
    }

    let (ln, bline) = lines.next().ok_or_else(|| perr(2 + s, "missing b line".into()))?;
    let brest = bline
        .trim()
        .strip_prefix('b')
        .ok_or_else(|| perr(ln, "expected `b <entries>`".into()))?;
    let b: Result<Vec<f64>, _> = brest.split_whitespace().map(str::parse::<f64>).collect();
    let b = b.map_err(|e| perr(ln, format!("bad numeric entry in b: {e}")))?;
    if b.len() != s {
        return Err(perr(ln, format!("b must have {} entries, found {}", s, b.len())));
    }

    let mut t = validate(&rows, &b, &label)?;
    t.set_source(Source::File);
    Ok(t)
}

/// CSV export: `i,j,value` triples for the lower triangle of `A` (1-based),
/// followed by the weights as row `s+1`.
pub fn to_csv(t: &Tableau) -> String {
    let mut out = String::from("i,j,value\n");
    for i in 0..t.s() {
        for j in 0..=i {
            let _ = writeln!(out, "{},{},{:.16e}", i + 1, j + 1, t.a(i, j));
        }
    }
    for (j, v) in t.b().iter().enumerate() {
        let _ = writeln!(out, "{},{},{v:.16e}", t.s() + 1, j + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_backward_euler() {
        let t = validate(&[vec![1.0]], &[1.0], "be").unwrap();
        assert_eq!(t.c(), &[1.0]);
        assert_eq!(t.s(), 1);
    }

    #[test]
    fn validate_rejects_upper_triangle() {
        let err = validate(&[vec![0.5, 0.1], vec![0.0, 0.5]], &[0.5, 0.5], "bad").unwrap_err();
        assert!(matches!(err, TableauError::NotLowerTriangular { i: 0, j: 1, .. }));
    }

    #[test]
    fn validate_zeroes_roundoff_upper_entries() {
        let t = validate(&[vec![0.5, 1e-15], vec![0.2, 0.5]], &[0.5, 0.5], "ok").unwrap();
        assert_eq!(t.a(0, 1), 0.0);
    }

    #[test]
    fn validate_rejects_nan() {
        let err = validate(&[vec![f64::NAN]], &[1.0], "nan").unwrap_err();
        assert!(matches!(err, TableauError::NonFinite { .. }));
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        assert!(validate(&[vec![1.0], vec![0.0, 1.0]], &[1.0, 0.0], "x").is_err());
        assert!(validate(&[vec![1.0]], &[1.0, 0.0], "x").is_err());
    }

    #[test]
    fn builtin_c_matches_row_sums() {
        // the first abscissa of DIRK-(7,4,4) equals its a11
        let t = builtin("dirk744").unwrap();
        assert_eq!(t.c()[0], 1.290066345260422e-01);
        assert!((t.c()[1] - 4.492833135308985e-01).abs() < 1e-15);
        assert!((t.c()[6] - 1.0).abs() < 1e-13);
        // last weight of the published table
        assert_eq!(t.b()[6], 3.395048796261326e-01);
    }

    #[test]
    fn builtin_dirk1255_first_entry() {
        let t = builtin("dirk1255").unwrap();
        assert_eq!(t.a(0, 0), 4.113473525867655e-02);
        assert_eq!(t.s(), 12);
    }

    #[test]
    fn builtin_backward_euler() {
        let t = builtin("backward_euler").unwrap();
        assert_eq!(t.a(0, 0), 1.0);
        assert_eq!(t.b(), &[1.0]);
    }

    #[test]
    fn builtin_unknown_name() {
        assert!(matches!(builtin("nope"), Err(TableauError::UnknownBuiltin(_))));
    }

    #[test]
    fn builtins_are_stiffly_accurate_where_expected() {
        for name in ["dirk744", "dirk1254", "dirk1255", "dirk541", "backward_euler", "crank_nicolson_dirk"] {
            assert!(builtin(name).unwrap().stiffly_accurate(), "{name}");
        }
        assert!(!builtin("dirk551").unwrap().stiffly_accurate());
    }

    #[test]
    fn reduce_single_stage_is_irreducible() {
        let t = builtin("backward_euler").unwrap();
        let rep = reduce_confluent(&t);
        assert!(!rep.reducible);
    }

    #[test]
    fn reduce_two_confluent_stages() {
        // A = [[g,0],[0,g]], b = [1/2,1/2]: c = (g,g) merges to backward-Euler-like
        let g = 0.3;
        let t = validate(&[vec![g, 0.0], vec![0.0, g]], &[0.5, 0.5], "conf").unwrap();
        let rep = reduce_confluent(&t);
        assert!(rep.reducible);
        assert_eq!(rep.r, 2);
        let red = rep.reduced.unwrap();
        assert_eq!(red.s(), 1);
        assert_eq!(red.a(0, 0), g);
        assert_eq!(red.b(), &[1.0]);
    }

    #[test]
    fn reduce_block_structure() {
        // 3-stage with 2-confluent leading block
        let g = 0.4;
        let t = validate(
            &[vec![g, 0.0, 0.0], vec![0.1, g - 0.1, 0.0], vec![0.2, 0.3, 0.25]],
            &[0.2, 0.3, 0.5],
            "conf3",
        )
        .unwrap();
        let rep = reduce_confluent(&t);
        assert!(rep.reducible);
        assert_eq!(rep.r, 2);
        let red = rep.reduced.unwrap();
        assert_eq!(red.s(), 2);
        assert!((red.a(1, 0) - 0.5).abs() < 1e-15); // 0.2 + 0.3
        assert!((red.a(1, 1) - 0.25).abs() < 1e-15);
        assert!((red.b()[0] - 0.5).abs() < 1e-15);
        // idempotence
        assert!(!reduce_confluent(&red).reducible);
    }

    #[test]
    fn builtins_not_reducible() {
        for name in BUILTIN_NAMES {
            if name == "crank_nicolson_dirk" {
                continue; // c = (0, 1): distinct anyway, included below
            }
            assert!(!reduce_confluent(&builtin(name).unwrap()).reducible, "{name}");
        }
        assert!(!reduce_confluent(&builtin("crank_nicolson_dirk").unwrap()).reducible);
    }

    #[test]
    fn text_roundtrip_bit_exact() {
        for name in BUILTIN_NAMES {
            let t = builtin(name).unwrap();
            let txt = to_text(&t);
            let back = from_text(&txt).unwrap();
            assert_eq!(t.s(), back.s());
            assert_eq!(t.label(), back.label());
            for i in 0..t.s() {
                for j in 0..=i {
                    assert_eq!(t.a(i, j), back.a(i, j), "{name} a[{i}][{j}]");
                }
            }
            assert_eq!(t.b(), back.b());
            assert_eq!(t.c(), back.c());
        }
    }

    #[test]
    fn text_format_first_line() {
        let t = builtin("backward_euler").unwrap();
        assert!(to_text(&t).starts_with("s 1\n"));
    }

    #[test]
    fn from_text_reports_malformed_input() {
        let err = from_text("s 2\nlabel x\n1.0\ngarbage here\nb 1 0").unwrap_err();
        match err {
            TableauError::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_header() {
        let t = builtin("backward_euler").unwrap();
        let csv = to_csv(&t);
        assert!(csv.starts_with("i,j,value\n"));
        assert!(csv.contains("1,1,1.0000000000000000e0"));
    }
}
