//! Explicit Dormand-Prince 8(5,3) with step control, and a fixed-step
//! implicit midpoint rule. Both support output grids and escape events.

use serde::{Deserialize, Serialize};

pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, z: &[f64], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    Dop853,
    ImplicitMidpoint { step: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dop853 => "dop853",
            Method::ImplicitMidpoint { .. } => "implicit-midpoint",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Output {
    /// Every `stride`-th accepted step (and the final state).
    Steps(usize),
    /// Exactly these times inside (t0, t1].
    Times(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub output: Output,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    /// Escape events are located to this accuracy in time.
    pub event_time_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::Dop853,
            rtol: 1e-10,
            atol: 1e-12,
            output: Output::Steps(1),
            max_steps: 5_000_000,
            initial_step: None,
            event_time_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stop {
    End,
    Event,
    BlowUp(String),
    MaxSteps,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stop: Stop,
    pub event_time: Option<f64>,
    pub stats: StepStats,
}

// Dormand-Prince 8(5,3) tableau (Hairer, Nørsett, Wanner).
const C2: f64 = 0.526001519587677318785587544488e-01;
const C3: f64 = 0.789002279381515978178381316732e-01;
const C4: f64 = 0.118350341907227396726757197510e+00;
const C5: f64 = 0.281649658092772603273242802490e+00;
const C6: f64 = 0.333333333333333333333333333333e+00;
const C7: f64 = 0.25e+00;
const C8: f64 = 0.307692307692307692307692307692e+00;
const C9: f64 = 0.651282051282051282051282051282e+00;
const C10: f64 = 0.6e+00;
const C11: f64 = 0.857142857142857142857142857142e+00;
const B1: f64 = 5.42937341165687622380535766363e-2;
const B6: f64 = 4.45031289275240888144113950566e0;
const B7: f64 = 1.89151789931450038304281599044e0;
const B8: f64 = -5.8012039600105847814672114227e0;
const B9: f64 = 3.1116436695781989440891606237e-1;
const B10: f64 = -1.52160949662516078556178806805e-1;
const B11: f64 = 2.01365400804030348374776537501e-1;
const B12: f64 = 4.47106157277725905176885569043e-2;
const BHH1: f64 = 0.244094488188976377952755905512e+00;
const BHH2: f64 = 0.733846688281611857341361741547e+00;
const BHH3: f64 = 0.220588235294117647058823529412e-01;
const ER1: f64 = 0.1312004499419488073250102996e-01;
const ER6: f64 = -0.1225156446376204440720569753e+01;
const ER7: f64 = -0.4957589496572501915214079952e+00;
const ER8: f64 = 0.1664377182454986536961530415e+01;
const ER9: f64 = -0.3503288487499736816886487290e+00;
const ER10: f64 = 0.3341791187130174790297318841e+00;
const ER11: f64 = 0.8192320648511571246570742613e-01;
const ER12: f64 = -0.2235530786388629525884427845e-01;
const A21: f64 = 5.26001519587677318785587544488e-2;
const A31: f64 = 1.97250569845378994544595329183e-2;
const A32: f64 = 5.91751709536136983633785987549e-2;
const A41: f64 = 2.95875854768068491816892993775e-2;
const A43: f64 = 8.87627564304205475450678981324e-2;
const A51: f64 = 2.41365134159266685502369798665e-1;
const A53: f64 = -8.84549479328286085344864962717e-1;
const A54: f64 = 9.24834003261792003115737966543e-1;
const A61: f64 = 3.7037037037037037037037037037e-2;
const A64: f64 = 1.70828608729473871279604482173e-1;
const A65: f64 = 1.25467687566822425016691814123e-1;
const A71: f64 = 3.7109375e-2;
const A74: f64 = 1.70252211019544039314978060272e-1;
const A75: f64 = 6.02165389804559606850219397283e-2;
const A76: f64 = -1.7578125e-2;
const A81: f64 = 3.70920001185047927108779319836e-2;
const A84: f64 = 1.70383925712239993810214054705e-1;
const A85: f64 = 1.07262030446373284651809199168e-1;
const A86: f64 = -1.53194377486244017527936158236e-2;
const A87: f64 = 8.27378916381402288758473766002e-3;
const A91: f64 = 6.24110958716075717114429577812e-1;
const A94: f64 = -3.36089262944694129406857109825e0;
const A95: f64 = -8.68219346841726006818189891453e-1;
const A96: f64 = 2.75920996994467083049415600797e1;
const A97: f64 = 2.01540675504778934086186788979e1;
const A98: f64 = -4.34898841810699588477366255144e1;
const A101: f64 = 4.77662536438264365890433908527e-1;
const A104: f64 = -2.48811461997166764192642586468e0;
const A105: f64 = -5.90290826836842996371446475743e-1;
const A106: f64 = 2.12300514481811942347288949897e1;
const A107: f64 = 1.52792336328824235832596922938e1;
const A108: f64 = -3.32882109689848629194453265587e1;
const A109: f64 = -2.03312017085086261358222928593e-2;
const A111: f64 = -9.3714243008598732571704021658e-1;
const A114: f64 = 5.18637242884406370830023853209e0;
const A115: f64 = 1.09143734899672957818500254654e0;
const A116: f64 = -8.14978701074692612513997267357e0;
const A117: f64 = -1.85200656599969598641566180701e1;
const A118: f64 = 2.27394870993505042818970056734e1;
const A119: f64 = 2.49360555267965238987089396762e0;
const A1110: f64 = -3.0467644718982195003823669022e0;
const A121: f64 = 2.27331014751653820792359768449e0;
const A124: f64 = -1.05344954667372501984066689879e1;
const A125: f64 = -2.00087205822486249909675718444e0;
const A126: f64 = -1.79589318631187989172765950534e1;
const A127: f64 = 2.79488845294199600508499808837e1;
const A128: f64 = -2.85899827713502369474065508674e0;
const A129: f64 = -8.87285693353062954433549289258e0;
const A1210: f64 = 1.23605671757943030647266201528e1;
const A1211: f64 = 6.43392746015763530355970484046e-1;

struct Work {
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
    err5: Vec<f64>,
    err3: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Work {
        Work { k: vec![vec![0.0; n]; 13], tmp: vec![0.0; n], err5: vec![0.0; n], err3: vec![0.0; n] }
    }
}

fn combo(y: &[f64], h: f64, k: &[Vec<f64>], coefs: &[(usize, f64)], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for &(j, c) in coefs {
            s += c * k[j][i];
        }
        out[i] = y[i] + h * s;
    }
}

/// One DOP853 step from (t, y) with k[1] = f(t, y) already set. Writes y_out and the two error estimates.
fn dop853_step(f: &dyn VectorField, t: f64, y: &[f64], h: f64, w: &mut Work, y_out: &mut [f64]) {
    let stages: [(f64, &[(usize, f64)]); 11] = [
        (C2, &[(1, A21)]),
        (C3, &[(1, A31), (2, A32)]),
        (C4, &[(1, A41), (3, A43)]),
        (C5, &[(1, A51), (3, A53), (4, A54)]),
        (C6, &[(1, A61), (4, A64), (5, A65)]),
        (C7, &[(1, A71), (4, A74), (5, A75), (6, A76)]),
        (C8, &[(1, A81), (4, A84), (5, A85), (6, A86), (7, A87)]),
        (C9, &[(1, A91), (4, A94), (5, A95), (6, A96), (7, A97), (8, A98)]),
        (C10, &[(1, A101), (4, A104), (5, A105), (6, A106), (7, A107), (8, A108), (9, A109)]),
        (C11, &[(1, A111), (4, A114), (5, A115), (6, A116), (7, A117), (8, A118), (9, A119), (10, A1110)]),
        (1.0, &[(1, A121), (4, A124), (5, A125), (6, A126), (7, A127), (8, A128), (9, A129), (10, A1210), (11, A1211)]),
    ];
    for (s, (c, coefs)) in stages.iter().enumerate() {
        let mut tmp = std::mem::take(&mut w.tmp);
        combo(y, h, &w.k, coefs, &mut tmp);
        let (_, rest) = w.k.split_at_mut(s + 2);
        f.eval(t + c * h, &tmp, &mut rest[0]);
        w.tmp = tmp;
    }
    let k = &w.k;
    for i in 0..y.len() {
        let sum = B1 * k[1][i] + B6 * k[6][i] + B7 * k[7][i] + B8 * k[8][i] + B9 * k[9][i] + B10 * k[10][i] + B11 * k[11][i] + B12 * k[12][i];
        y_out[i] = y[i] + h * sum;
        w.err3[i] = sum - BHH1 * k[1][i] - BHH2 * k[9][i] - BHH3 * k[12][i];
        w.err5[i] = ER1 * k[1][i] + ER6 * k[6][i] + ER7 * k[7][i] + ER8 * k[8][i] + ER9 * k[9][i] + ER10 * k[10][i] + ER11 * k[11][i] + ER12 * k[12][i];
    }
}

fn dop853_error(y: &[f64], y_out: &[f64], h: f64, w: &Work, rtol: f64, atol: f64) -> f64 {
    let (mut e5, mut e3) = (0.0, 0.0);
    for i in 0..y.len() {
        let sk = atol + rtol * y[i].abs().max(y_out[i].abs());
        e5 += (w.err5[i] / sk).powi(2);
        e3 += (w.err3[i] / sk).powi(2);
    }
    let deno = e5 + 0.01 * e3;
    let deno = if deno > 0.0 { deno } else { 1.0 };
    h.abs() * e5 * (1.0 / (y.len() as f64 * deno)).sqrt()
}

/// z1 = z0 + h f(t + h/2, (z0 + z1)/2) by fixed-point iteration. Returns false on non-convergence.
fn midpoint_step(f: &dyn VectorField, t: f64, y: &[f64], h: f64, y_out: &mut [f64], evals: &mut usize) -> bool {
    let n = y.len();
    let mut fv = vec![0.0; n];
    let mut mid = vec![0.0; n];
    f.eval(t, y, &mut fv);
    *evals += 1;
    for i in 0..n {
        y_out[i] = y[i] + h * fv[i];
    }
    for _ in 0..100 {
        for i in 0..n {
            mid[i] = 0.5 * (y[i] + y_out[i]);
        }
        f.eval(t + 0.5 * h, &mid, &mut fv);
        *evals += 1;
        let mut change: f64 = 0.0;
        let mut scale: f64 = 1.0;
        for i in 0..n {
            let next = y[i] + h * fv[i];
            change = change.max((next - y_out[i]).abs());
            scale = scale.max(next.abs());
            y_out[i] = next;
        }
        if !change.is_finite() {
            return false;
        }
        if change <= 4.0 * f64::EPSILON * scale {
            return true;
        }
    }
    false
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrate from (t0, z0) to t1. `event(z)` crossing from negative to >= 0 stops the run.
pub fn solve(f: &dyn VectorField, z0: &[f64], t0: f64, t1: f64, opts: &SolveOptions, event: Option<&dyn Fn(&[f64]) -> f64>) -> Solution {
    let n = z0.len();
    let mut stats = StepStats::default();
    let mut times = vec![t0];
    let mut states = vec![z0.to_vec()];
    let mut grid: Vec<f64> = match &opts.output {
        Output::Times(ts) => ts.iter().copied().filter(|&s| s > t0 && s <= t1).collect(),
        Output::Steps(_) => Vec::new(),
    };
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite output times"));
    grid.dedup();
    let mut next_out = 0usize;
    let stride = match opts.output {
        Output::Steps(s) => s.max(1),
        Output::Times(_) => 0,
    };
    let mut t = t0;
    let mut y = z0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut work = Work::new(n);
    f.eval(t, &y, &mut work.k[1]);
    stats.evaluations += 1;
    let mut h = match (opts.method, opts.initial_step) {
        (Method::ImplicitMidpoint { step }, _) => step,
        (_, Some(h)) => h,
        _ => {
            let (mut d0, mut d1) = (0.0f64, 0.0f64);
            for i in 0..n {
                let sk = opts.atol + opts.rtol * y[i].abs();
                d0 += (y[i] / sk).powi(2);
                d1 += (work.k[1][i] / sk).powi(2);
            }
            let (d0, d1) = ((d0 / n as f64).sqrt(), (d1 / n as f64).sqrt());
            if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }
        }
    }
    .min(t1 - t0);
    let mut stop = Stop::End;
    let mut event_time = None;
    let mut since_out = 0usize;
    let mut last_recorded = true;
    let min_h = |t: f64| 1e-14 * t.abs().max(1.0);

    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            stop = Stop::MaxSteps;
            break;
        }
        let mut h_try = h.min(t1 - t);
        let mut hits_output = false;
        if next_out < grid.len() && t + h_try >= grid[next_out] {
            h_try = grid[next_out] - t;
            hits_output = true;
        }
        if h_try < min_h(t) && t1 - t > min_h(t) && !hits_output {
            stop = Stop::BlowUp(format!("step size underflow at t = {t:e}"));
            break;
        }
        // Attempt one step of length h_try.
        let accepted = match opts.method {
            Method::Dop853 => {
                dop853_step(f, t, &y, h_try, &mut work, &mut y_new);
                stats.evaluations += 11;
                if !finite(&y_new) || !finite(&work.err5) {
                    stats.rejected += 1;
                    h = h_try * 0.25;
                    if h < min_h(t) {
                        stop = Stop::BlowUp(format!("non-finite stages at t = {t:e}"));
                        break;
                    }
                    continue;
                }
                let err = dop853_error(&y, &y_new, h_try, &work, opts.rtol, opts.atol);
                let fac = if err > 0.0 { 0.9 * err.powf(-0.125) } else { 6.0 };
                if err <= 1.0 {
                    if !hits_output {
                        h = h_try * fac.clamp(1.0 / 3.0, 6.0);
                    }
                    true
                } else {
                    stats.rejected += 1;
                    h = h_try * fac.clamp(0.1, 1.0);
                    false
                }
            }
            Method::ImplicitMidpoint { .. } => {
                if midpoint_step(f, t, &y, h_try, &mut y_new, &mut stats.evaluations) && finite(&y_new) {
                    true
                } else {
                    stop = Stop::BlowUp(format!("implicit midpoint iteration diverged at t = {t:e}"));
                    break;
                }
            }
        };
        if !accepted {
            continue;
        }
        if let Some(g) = event {
            if g(&y_new) >= 0.0 && g(&y) < 0.0 {
                // Bisect on the sub-step length.
                let (mut lo, mut hi) = (0.0, h_try);
                let mut y_hi = y_new.clone();
                let mut y_mid = vec![0.0; n];
                while hi - lo > opts.event_time_tol {
                    let mid = 0.5 * (lo + hi);
                    match opts.method {
                        Method::Dop853 => {
                            dop853_step(f, t, &y, mid, &mut work, &mut y_mid);
                            stats.evaluations += 11;
                        }
                        Method::ImplicitMidpoint { .. } => {
                            midpoint_step(f, t, &y, mid, &mut y_mid, &mut stats.evaluations);
                        }
                    }
                    if g(&y_mid) >= 0.0 {
                        hi = mid;
                        y_hi.copy_from_slice(&y_mid);
                    } else {
                        lo = mid;
                    }
                }
                stats.accepted += 1;
                t += hi;
                y = y_hi;
                times.push(t);
                states.push(y.clone());
                event_time = Some(t);
                stop = Stop::Event;
                last_recorded = true;
                break;
            }
        }
        stats.accepted += 1;
        t = if hits_output { grid[next_out] } else { t + h_try };
        std::mem::swap(&mut y, &mut y_new);
        f.eval(t, &y, &mut work.k[1]);
        stats.evaluations += 1;
        if !finite(&work.k[1]) {
            stop = Stop::BlowUp(format!("non-finite field at t = {t:e}"));
            times.push(t);
            states.push(y.clone());
            last_recorded = true;
            break;
        }
        last_recorded = false;
        if hits_output {
            next_out += 1;
            times.push(t);
            states.push(y.clone());
            last_recorded = true;
        } else if stride > 0 {
            since_out += 1;
            if since_out == stride {
                since_out = 0;
                times.push(t);
                states.push(y.clone());
                last_recorded = true;
            }
        }
    }
    if !last_recorded && stride > 0 && times.last() != Some(&t) {
        times.push(t);
        states.push(y);
    }
    Solution { times, states, stop, event_time, stats }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Osc;
    impl VectorField for Osc {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _t: f64, z: &[f64], out: &mut [f64]) {
            out[0] = z[1];
            out[1] = -z[0];
        }
    }

    struct Cube;
    impl VectorField for Cube {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _t: f64, z: &[f64], out: &mut [f64]) {
            out[0] = z[0] * z[0];
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let opts = SolveOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let s = solve(&Osc, &[1.0, 0.0], 0.0, 10.0, &opts, None);
        assert_eq!(s.stop, Stop::End);
        let z = s.states.last().unwrap();
        assert!((z[0] - 10f64.cos()).abs() < 1e-10);
        assert!((z[1] + 10f64.sin()).abs() < 1e-10);
        assert!(s.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn output_grid_is_hit_exactly() {
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.5).collect();
        let opts = SolveOptions { rtol: 1e-12, atol: 1e-14, output: Output::Times(grid.clone()), ..Default::default() };
        let s = solve(&Osc, &[1.0, 0.0], 0.0, 10.0, &opts, None);
        assert_eq!(s.times[1..], grid[..]);
        for (t, z) in s.times.iter().zip(&s.states) {
            assert!((z[0] - t.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn escape_event_located() {
        // y' = y², y(0) = 1: y = 1/(1−t) crosses 4 at t = 3/4.
        let opts = SolveOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let g = |z: &[f64]| z[0] - 4.0;
        let s = solve(&Cube, &[1.0], 0.0, 2.0, &opts, Some(&g));
        assert_eq!(s.stop, Stop::Event);
        assert!((s.event_time.unwrap() - 0.75).abs() < 1e-8);
    }

    #[test]
    fn blow_up_flag() {
        let s = solve(&Cube, &[1.0], 0.0, 2.0, &SolveOptions::default(), None);
        assert!(matches!(s.stop, Stop::BlowUp(_)), "{:?}", s.stop);
        assert!(*s.times.last().unwrap() < 1.0 + 1e-6);
        assert!(*s.times.last().unwrap() > 0.99);
    }

    #[test]
    fn midpoint_preserves_quadratic_invariant() {
        let opts = SolveOptions { method: Method::ImplicitMidpoint { step: 0.05 }, ..Default::default() };
        let s = solve(&Osc, &[1.0, 0.0], 0.0, 100.0, &opts, None);
        for z in &s.states {
            assert!((z[0] * z[0] + z[1] * z[1] - 1.0).abs() < 1e-13);
        }
    }
}
