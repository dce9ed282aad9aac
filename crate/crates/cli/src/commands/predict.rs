use anyhow::Result;
use clap::Args;
use serde::Serialize;
use tbell::analytic::{
    chsh_analytic, correlation_e, g2_closed_form, g2_for_visibility, optimal_squeezing, violation_window,
    visibility_alpha0, visibility_alpha_pi4, OperatingPoint, ViolationWindow, VisibilityMode, WindowStatus,
    DEFAULT_HORIZON,
};
use tbell::model::{chsh_settings, PhysicsParams, Settings};

use super::soft;
use crate::context::{usage, Context};
use crate::io::{write_csv, write_json};
use crate::Format;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Largest delay of the S(Δt) curve (ps).
    #[arg(long, default_value_t = 20.0)]
    pub curve_max: f64,
    /// Step of the S(Δt) curve (ps).
    #[arg(long, default_value_t = 0.1)]
    pub curve_step: f64,
    /// Delay horizon for the violation window (ps).
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    pub horizon: f64,
    /// Also search `LO,HI` for the squeezing that maximizes the window.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub optimize_g: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Correlator {
    settings: Settings,
    e: Option<f64>,
}

#[derive(Serialize)]
struct DelayPrediction {
    delta_t: f64,
    g2: Option<f64>,
    v0: Option<f64>,
    v_pi4: Option<f64>,
    v_pi4_taylor: Option<f64>,
    correlators: Vec<Correlator>,
    s: Option<f64>,
}

#[derive(Serialize)]
struct Window {
    duration_ps: f64,
    status: &'static str,
}

#[derive(Serialize)]
struct Optimum {
    g: f64,
    window: Window,
}

#[derive(Serialize)]
struct CurvePoint {
    delta_t: f64,
    s: Option<f64>,
}

#[derive(Serialize)]
struct PredictReport {
    params: PhysicsParams,
    /// g² at which V = 1/√2, the smallest cross-correlation compatible with a violation.
    g2_threshold: f64,
    delays: Vec<DelayPrediction>,
    violation_window: Window,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimal_squeezing: Option<Optimum>,
    s_curve: Vec<CurvePoint>,
}

fn describe(w: ViolationWindow) -> Window {
    Window {
        duration_ps: w.duration,
        status: match w.status {
            WindowStatus::Bounded => "bounded",
            WindowStatus::NoViolation => "no violation",
            WindowStatus::Capped => "capped at horizon",
        },
    }
}

fn window(params: &PhysicsParams, horizon: f64) -> tbell::Result<Window> {
    Ok(soft(violation_window(params, horizon))?.map_or(
        Window {
            duration_ps: 0.0,
            status: "no violation",
        },
        describe,
    ))
}

fn at_delay(params: &PhysicsParams, dt: f64) -> tbell::Result<DelayPrediction> {
    let op = OperatingPoint::at_delay(params, dt)?;
    let correlators = chsh_settings()
        .iter()
        .map(|s| {
            Ok(Correlator {
                settings: *s,
                e: soft(correlation_e(s, &op))?,
            })
        })
        .collect::<tbell::Result<_>>()?;
    Ok(DelayPrediction {
        delta_t: dt,
        g2: soft(g2_closed_form(&op))?,
        v0: soft(visibility_alpha0(&op))?,
        v_pi4: soft(visibility_alpha_pi4(&op, VisibilityMode::Quadrature))?,
        v_pi4_taylor: soft(visibility_alpha_pi4(&op, VisibilityMode::Taylor))?,
        correlators,
        s: soft(chsh_analytic(params, dt, params.source.sigma_tech))?,
    })
}

pub fn run(ctx: &mut Context, args: &PredictArgs) -> Result<()> {
    if !(args.curve_step > 0.0 && args.curve_max >= 0.0) {
        return Err(usage("curve step must be positive and curve max non-negative"));
    }
    let params = ctx.physics();
    let delays = ctx.plan().effective_delays();
    let preds = delays
        .iter()
        .map(|&dt| at_delay(&params, dt))
        .collect::<tbell::Result<Vec<_>>>()?;

    let n = (args.curve_max / args.curve_step + 1e-9).floor() as usize;
    let curve = (0..=n)
        .map(|i| {
            let dt = i as f64 * args.curve_step;
            Ok(CurvePoint {
                delta_t: dt,
                s: soft(chsh_analytic(&params, dt, params.source.sigma_tech))?,
            })
        })
        .collect::<tbell::Result<Vec<_>>>()?;

    let optimum = match &args.optimize_g {
        Some(r) if r.len() == 2 && 0.0 < r[0] && r[0] < r[1] => {
            let (g, w) = optimal_squeezing(&params, r[0], r[1], args.horizon)?;
            Some(Optimum { g, window: describe(w) })
        }
        Some(_) => return Err(usage("--optimize-g expects LO,HI with 0 < LO < HI")),
        None => None,
    };

    let report = PredictReport {
        params,
        g2_threshold: g2_for_visibility(std::f64::consts::FRAC_1_SQRT_2),
        delays: preds,
        violation_window: window(&params, args.horizon)?,
        optimal_squeezing: optimum,
        s_curve: curve,
    };
    let path = ctx.output("predict.json");
    write_json(&path, &report)?;
    if ctx.format == Format::Csv {
        let rows: Vec<_> = report
            .s_curve
            .iter()
            .map(|p| vec![Some(p.delta_t), p.s])
            .collect();
        let path = ctx.output("s_curve.csv");
        write_csv(&path, &["delta_t_ps", "s"], &rows)?;
        let rows: Vec<_> = report
            .delays
            .iter()
            .map(|d| {
                let mut r = vec![Some(d.delta_t), d.g2, d.v0, d.v_pi4, d.v_pi4_taylor];
                r.extend(d.correlators.iter().map(|c| c.e));
                r.push(d.s);
                r
            })
            .collect();
        let path = ctx.output("predict.csv");
        write_csv(
            &path,
            &["delta_t_ps", "g2", "v0", "v_pi4", "v_pi4_taylor", "e1", "e2", "e3", "e4", "s"],
            &rows,
        )?;
    }
    println!(
        "S = {}, window {:.2} ps ({})",
        report.delays[0].s.map_or("n/a".into(), |s| format!("{s:.4}")),
        report.violation_window.duration_ps,
        report.violation_window.status
    );
    Ok(())
}
