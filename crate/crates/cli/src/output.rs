//! Test-result rendering. Every floating value is printed with 15
//! significant digits so runs can be compared byte for byte.

use signflip::glm::{DesignData, Family};
use signflip::score::ScoreTestResult;
use std::fmt::Write;
use std::path::Path;

pub struct TestContext<'a> {
    pub family: &'a Family,
    pub data: &'a DesignData,
    pub seed: u64,
    pub data_path: &'a Path,
}

/// 15 significant digits, exponent form; stable across platforms.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.14e}")
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn json_f64_array(values: &[f64]) -> String {
    let mut out = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push(']');
    out
}

/// Fixed-order JSON document for one test run.
pub fn render_json(result: &ScoreTestResult, ctx: &TestContext) -> String {
    let d = &result.diagnostics;
    let mut out = String::new();
    out.push_str("{\n");
    let mut field = |key: &str, value: String, last: bool| {
        let _ = writeln!(out, "  {}: {}{}", json_string(key), value, if last { "" } else { "," });
    };
    field("command", json_string("test"), false);
    field("data", json_string(&ctx.data_path.display().to_string()), false);
    field("family", json_string(ctx.family.kind().name()), false);
    field("link", json_string(ctx.family.link().name()), false);
    field("variant", json_string(result.variant.name()), false);
    field("alternative", json_string(result.alternative.name()), false);
    field("n", ctx.data.n().to_string(), false);
    field("d", ctx.data.d().to_string(), false);
    field("q", ctx.data.q().to_string(), false);
    field("g", result.g.to_string(), false);
    field("seed", ctx.seed.to_string(), false);
    field("alpha", fmt_f64(result.alpha), false);
    field("stat_observed", fmt_f64(result.stat_observed), false);
    field(
        "stat_vector_observed",
        match &result.stat_vector_observed {
            Some(v) => json_f64_array(v),
            None => "null".to_string(),
        },
        false,
    );
    field("p_value", fmt_f64(result.p_value), false);
    field("reject", result.reject.to_string(), false);
    let diagnostics = format!(
        "{{\"a_norm2\": {}, \"flip_var_min\": {}, \"flip_var_max\": {}, \"dispersion_gauge\": {}, \"phi_hat\": {}, \"fit_iterations\": {}, \"eta_clamped\": {}}}",
        json_f64_array(&d.a_norm2),
        fmt_f64(d.flip_var_min),
        fmt_f64(d.flip_var_max),
        fmt_f64(d.dispersion_gauge),
        fmt_f64(d.phi_hat),
        d.fit_iterations,
        d.eta_clamped
    );
    field("diagnostics", diagnostics, false);
    field("stats_flipped", json_f64_array(&result.stats_flipped), true);
    out.push_str("}\n");
    out
}

pub fn render_text(result: &ScoreTestResult, ctx: &TestContext) -> String {
    let d = &result.diagnostics;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "sign-flip score test ({} variant, {} alternative)",
        result.variant.name(),
        result.alternative.name()
    );
    let _ = writeln!(
        out,
        "  model: {} family, {} link; n = {}, d = {}, q = {}",
        ctx.family.kind().name(),
        ctx.family.link().name(),
        ctx.data.n(),
        ctx.data.d(),
        ctx.data.q()
    );
    let _ = writeln!(out, "  flips: g = {} (seed {})", result.g, ctx.seed);
    let _ = writeln!(out, "  observed statistic: {}", fmt_f64(result.stat_observed));
    if let Some(v) = &result.stat_vector_observed {
        let parts: Vec<String> = v.iter().map(|x| fmt_f64(*x)).collect();
        let _ = writeln!(out, "  standardized score vector: [{}]", parts.join(", "));
    }
    let _ = writeln!(out, "  p-value: {}", fmt_f64(result.p_value));
    let _ = writeln!(
        out,
        "  decision at alpha = {}: {}",
        fmt_f64(result.alpha),
        if result.reject { "REJECT" } else { "RETAIN" }
    );
    let _ = writeln!(
        out,
        "  fit: {} iterations, dispersion estimate {}, Pearson gauge {}",
        d.fit_iterations,
        fmt_f64(d.phi_hat),
        fmt_f64(d.dispersion_gauge)
    );
    let _ = writeln!(
        out,
        "  flip variance range: [{}, {}]",
        fmt_f64(d.flip_var_min),
        fmt_f64(d.flip_var_max)
    );
    if d.eta_clamped {
        let _ = writeln!(
            out,
            "  warning: the linear predictor touched the safety clamp during fitting"
        );
    }
    out
}
