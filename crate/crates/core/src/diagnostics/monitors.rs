//! Per-snapshot diagnostics records and the bound monitors built on them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::functionals::{energy, local_quantities, lyapunov_from, mass, quadratic_form_h, unstable_direction};
use super::localizers::LocalizerSet;
use crate::error::{Error, Result};
use crate::fit::{fit_envelope, rate_grid, EnvelopeFit};
use crate::ground_state::GroundStateProfile;
use crate::modulation::DecompositionState;
use crate::soliton::{Point, SolitonSpec};
use crate::spectral::Field;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub local_mass: Vec<f64>,
    pub local_momentum: Vec<Point>,
    /// `Re⟨R̃_k, ε⟩`.
    pub unstable: Vec<f64>,
    pub lyapunov: f64,
    pub quadratic: f64,
    pub eps_l2: f64,
    pub eps_h1: f64,
    /// Filled once the whole trajectory is decomposed.
    pub modulation: f64,
    pub b_star: f64,
}

pub fn diagnose(
    u: &Field,
    state: &DecompositionState,
    profile: &GroundStateProfile,
    specs: &[SolitonSpec],
    localizers: &LocalizerSet,
    b_star: f64,
) -> Result<DiagnosticsRecord> {
    let t = state.t;
    let p = profile.p();
    let local = local_quantities(u, localizers, t)?;
    let e = energy(u, p);
    Ok(DiagnosticsRecord {
        t,
        mass: mass(u),
        energy: e,
        lyapunov: lyapunov_from(e, &local, specs),
        local_mass: local.mass,
        local_momentum: local.momentum,
        unstable: unstable_direction(state, profile, specs)?,
        quadratic: quadratic_form_h(&state.eps, profile, specs, &state.params, localizers, t)?,
        eps_l2: state.eps_l2(),
        eps_h1: state.eps_h1(),
        modulation: 0.0,
        b_star,
    })
}

/// All values finite and times strictly increasing.
pub fn validate_stream(records: &[DiagnosticsRecord]) -> Result<()> {
    for r in records {
        let scalars = [r.t, r.mass, r.energy, r.lyapunov, r.quadratic, r.eps_l2, r.eps_h1, r.modulation, r.b_star];
        let finite = scalars.iter().all(|v| v.is_finite())
            && r.local_mass.iter().chain(&r.unstable).all(|v| v.is_finite())
            && r.local_momentum.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Format(format!("non-finite diagnostics at t = {}", r.t)));
        }
    }
    if records.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Format("diagnostics times must increase strictly".into()));
    }
    Ok(())
}

/// Header: `t,mass,energy,I_k…,M_k_a…,unstable_k…,G,H,eps_l2,eps_h1,mod,b_star`.
pub fn write_records_csv<W: Write>(records: &[DiagnosticsRecord], dim: usize, mut w: W) -> Result<()> {
    let count = records.first().map_or(0, |r| r.local_mass.len());
    let mut header: Vec<String> = vec!["t".into(), "mass".into(), "energy".into()];
    header.extend((0..count).map(|k| format!("I{k}")));
    for k in 0..count {
        header.extend((0..dim).map(|a| format!("M{k}_{a}")));
    }
    header.extend((0..count).map(|k| format!("unstable{k}")));
    header.extend(["G", "H", "eps_l2", "eps_h1", "mod", "b_star"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for r in records {
        let mut row = vec![r.t, r.mass, r.energy];
        row.extend(&r.local_mass);
        for m in &r.local_momentum {
            row.extend(&m[..dim]);
        }
        row.extend(&r.unstable);
        row.extend([r.lyapunov, r.quadratic, r.eps_l2, r.eps_h1, r.modulation, r.b_star]);
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Minimal SVG line plot of one column against another.
pub fn svg_plot(xs: &[f64], ys: &[f64], x_label: &str, y_label: &str, log_y: bool) -> String {
    let (width, height, margin) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || **y > 0.0))
        .map(|(&x, &y)| (x, if log_y { y.log10() } else { y }))
        .collect();
    let range = |sel: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(sel).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(sel).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let path: Vec<String> = pts
        .iter()
        .map(|&(x, y)| {
            let px = margin + (x - x0) / (x1 - x0) * (width - 2.0 * margin);
            let py = height - margin - (y - y0) / (y1 - y0) * (height - 2.0 * margin);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let y_axis = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"{pts}\"/>\n",
            "<text x=\"{cx}\" y=\"{by}\" text-anchor=\"middle\">{xl} [{x0:.3}, {x1:.3}]</text>\n",
            "<text x=\"12\" y=\"{cy}\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">{yl} [{y0:.3}, {y1:.3}]</text>\n",
            "</svg>\n"
        ),
        w = width,
        h = height,
        pts = path.join(" "),
        cx = width / 2.0,
        by = height - 10.0,
        cy = height / 2.0,
        xl = x_label,
        yl = y_axis,
        x0 = x0,
        x1 = x1,
        y0 = y0,
        y1 = y1,
    )
}

/// Centered differences on a possibly non-uniform mesh, one-sided at the ends.
pub fn time_derivative(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (values[b] - values[a]) / (times[b] - times[a])
        })
        .collect()
}

/// A measured series against a bound of the form `C·shape(δ₁, δ₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonitorSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub measured: Vec<f64>,
    /// `None` when the shape vanishes identically (no noise, no remainder).
    pub fit: Option<EnvelopeFit>,
}

impl MonitorSeries {
    pub fn constant(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.constant)
    }

    /// Every sample below its fitted bound (up to rounding).
    pub fn dominated(&self) -> bool {
        self.fit.as_ref().is_none_or(|f| f.ratio.iter().all(|&r| r <= 1.0 + 1e-9))
    }
}

/// Rates `(δ₁, δ₂)` fixed across runs or fitted per run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rates {
    Fitted,
    Fixed(f64, f64),
}

fn rate_pairs(rates: Rates, two: bool) -> Vec<(f64, f64)> {
    match rates {
        Rates::Fixed(a, b) => vec![(a, b)],
        Rates::Fitted => {
            let grid = rate_grid(0.02, 2.0, 15);
            if two {
                grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect()
            } else {
                grid.iter().map(|&b| (0.0, b)).collect()
            }
        }
    }
}

fn sorted(records: &[DiagnosticsRecord]) -> Vec<&DiagnosticsRecord> {
    let mut out: Vec<&DiagnosticsRecord> = records.iter().collect();
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out
}

/// `|dI_k/dt| ≤ (C/t)(‖ε‖²_{H¹} + e^{−δt})` and
/// `|dM_k/dt| ≤ (C/t)(‖ε‖² + e^{−δ₂t}) + CB★(‖ε‖² + φ(δ₁t) + e^{−δ₂t})`.
pub fn almost_conservation_monitor<P>(records: &[DiagnosticsRecord], phi: P, rates: Rates) -> Vec<MonitorSeries>
where
    P: Fn(f64) -> f64,
{
    let recs = sorted(records);
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let eps2: Vec<f64> = recs.iter().map(|r| r.eps_h1 * r.eps_h1).collect();
    let count = recs.first().map_or(0, |r| r.local_mass.len());
    let mut out = Vec::with_capacity(2 * count);
    for k in 0..count {
        let i_series: Vec<f64> = recs.iter().map(|r| r.local_mass[k]).collect();
        let di: Vec<f64> = time_derivative(&times, &i_series).into_iter().map(f64::abs).collect();
        let fit = fit_envelope(&di, &rate_pairs(rates, false), |_, d, i| (eps2[i] + (-d * times[i]).exp()) / times[i]);
        out.push(MonitorSeries {
            name: format!("dI{k}"),
            times: times.clone(),
            measured: di,
            fit,
        });
        let dim_m: Vec<Vec<f64>> = (0..2)
            .map(|a| {
                let m: Vec<f64> = recs.iter().map(|r| r.local_momentum[k][a]).collect();
                time_derivative(&times, &m)
            })
            .collect();
        let dm: Vec<f64> = (0..times.len()).map(|i| dim_m[0][i].hypot(dim_m[1][i])).collect();
        let fit = fit_envelope(&dm, &rate_pairs(rates, true), |d1, d2, i| {
            let t = times[i];
            let tail = (-d2 * t).exp();
            (eps2[i] + tail) / t + recs[i].b_star * (eps2[i] + phi(d1 * t) + tail)
        });
        out.push(MonitorSeries {
            name: format!("dM{k}"),
            times: times.clone(),
            measured: dm,
            fit,
        });
    }
    out
}

/// `|dE/dt| ≤ C·B★(t)(φ(δ₁t) + ‖ε‖²_{H¹} + e^{−δ₂t})`.
pub fn energy_drift_bound<P>(records: &[DiagnosticsRecord], phi: P, rates: Rates) -> MonitorSeries
where
    P: Fn(f64) -> f64,
{
    let recs = sorted(records);
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let e: Vec<f64> = recs.iter().map(|r| r.energy).collect();
    let de: Vec<f64> = time_derivative(&times, &e).into_iter().map(f64::abs).collect();
    let fit = fit_envelope(&de, &rate_pairs(rates, true), |d1, d2, i| {
        let t = times[i];
        recs[i].b_star * (phi(d1 * t) + recs[i].eps_h1.powi(2) + (-d2 * t).exp())
    });
    MonitorSeries {
        name: "dE".into(),
        times,
        measured: de,
        fit,
    }
}

/// `|Re⟨R̃_k, ε⟩| ≤ C(∫_t^{T} ‖ε‖²/s ds + ‖ε‖² + e^{−δt})`, with the integral
/// taken along the recorded trajectory up to its last time.
pub fn unstable_direction_monitor(records: &[DiagnosticsRecord], rates: Rates) -> Vec<MonitorSeries> {
    let recs = sorted(records);
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let eps2: Vec<f64> = recs.iter().map(|r| r.eps_h1 * r.eps_h1).collect();
    let n = times.len();
    let mut tail = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let h = times[i + 1] - times[i];
        tail[i] = tail[i + 1] + 0.5 * h * (eps2[i] / times[i] + eps2[i + 1] / times[i + 1]);
    }
    let count = recs.first().map_or(0, |r| r.unstable.len());
    (0..count)
        .map(|k| {
            let measured: Vec<f64> = recs.iter().map(|r| r.unstable[k].abs()).collect();
            let fit = fit_envelope(&measured, &rate_pairs(rates, false), |_, d, i| tail[i] + eps2[i] + (-d * times[i]).exp());
            MonitorSeries {
                name: format!("unstable{k}"),
                times: times.clone(),
                measured,
                fit,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, eps: f64, mass_left: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 2.0,
            energy: 0.1 * (-t).exp(),
            local_mass: vec![mass_left, 2.0 - mass_left],
            local_momentum: vec![[0.5, 0.0], [-0.5, 0.0]],
            unstable: vec![eps * eps, -eps * eps],
            lyapunov: 1.0,
            quadratic: eps * eps,
            eps_l2: eps,
            eps_h1: eps,
            modulation: eps,
            b_star: 1.0 / t,
        }
    }

    fn stream() -> Vec<DiagnosticsRecord> {
        (1..80)
            .map(|i| {
                let t = 1.0 + 0.25 * i as f64;
                record(t, (-0.3 * t).exp(), 1.0 + 0.05 * (-0.3 * t).exp())
            })
            .collect()
    }

    #[test]
    fn derivative_of_a_quadratic_is_exact_inside() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|s| s * s).collect();
        let d = time_derivative(&t, &y);
        for i in 1..9 {
            assert!((d[i] - 2.0 * t[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn monitors_dominate_their_series() {
        let recs = stream();
        validate_stream(&recs).unwrap();
        let phi = |x: f64| (-x).exp();
        let mons = almost_conservation_monitor(&recs, phi, Rates::Fitted);
        assert_eq!(mons.len(), 4);
        assert!(mons.iter().all(MonitorSeries::dominated));
        // constant local momentum has nothing to bound
        assert!(mons[1].measured.iter().all(|&m| m == 0.0));
        let e = energy_drift_bound(&recs, phi, Rates::Fitted);
        assert!(e.dominated() && e.constant().unwrap() > 0.0);
        let u = unstable_direction_monitor(&recs, Rates::Fixed(0.0, 0.5));
        assert!(u.iter().all(MonitorSeries::dominated));
    }

    #[test]
    fn stream_validation_rejects_disorder() {
        let mut recs = stream();
        recs.swap(3, 4);
        assert!(validate_stream(&recs).is_err());
        let mut recs = stream();
        recs[2].energy = f64::NAN;
        assert!(validate_stream(&recs).is_err());
    }

    #[test]
    fn csv_and_svg_outputs() {
        let recs = stream();
        let mut buf = Vec::new();
        write_records_csv(&recs, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,mass,energy,I0,I1,M0_0,M1_0,unstable0,unstable1,G,H,eps_l2,eps_h1,mod,b_star");
        assert_eq!(text.lines().count(), recs.len() + 1);
        let xs: Vec<f64> = recs.iter().map(|r| r.t).collect();
        let ys: Vec<f64> = recs.iter().map(|r| r.eps_h1).collect();
        let svg = svg_plot(&xs, &ys, "t", "eps_h1", true);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
