//! Report emission: a versioned JSON envelope and plot-ready CSV tables.
//! Outputs are deterministic for a given configuration (ordered maps,
//! stable float formatting), so reruns byte-reproduce their reports.

use serde::Serialize;

use crate::spectrum::SpectrumEstimate;
use crate::Result;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    command: &'a str,
    report: &'a T,
}

/// Pretty JSON with the `"schema":"1"` envelope and a trailing newline.
pub fn emit_json<T: Serialize>(command: &str, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema: SCHEMA_VERSION,
        command,
        report: body,
    })?;
    s.push('\n');
    Ok(s)
}

/// CSV table `(q, m, S_m, tau_hat, D_hat)` of a spectrum estimate.
pub fn spectrum_csv(est: &SpectrumEstimate) -> String {
    let mut out = String::from("q,m,s_m,tau_hat,d_hat\n");
    for p in &est.points {
        for s in &p.per_m {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.q, s.m, s.s_m, p.tau_hat, p.d_hat
            ));
        }
    }
    out
}

/// CSV sweep `(m, sigma_hat, eps_hat)` of flattening probes.
pub fn flatten_csv(reports: &[crate::flatten::FlatteningReport]) -> String {
    let mut out = String::from("m,sigma_hat,eps_hat\n");
    for r in reports {
        out.push_str(&format!("{},{},{}\n", r.m, r.sigma_hat, r.eps_hat));
    }
    out
}
