//! Report rendering.
//!
//! JSON is the canonical form: pretty-printed, keys in declaration order,
//! floats in shortest round-trip notation. Markdown is derived from the same
//! values, each printed with `{:.3}`: the exact binary value rounded to three
//! decimals, halves to even.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::analysis::{ccm_file_name, Basis, ReliabilityReport, Section};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
}

pub fn emit_report(report: &ReliabilityReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Markdown => Ok(to_markdown(report)),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Domain(format!("report serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(json: &str) -> Result<ReliabilityReport> {
    serde_json::from_str(json).map_err(|e| Error::Domain(format!("invalid report JSON: {e}")))
}

/// Writes `report.json` and/or `report.md` plus one `ccm_<device>_to_<ref>.json`
/// per fitted device into `dir`, creating it if needed.
pub fn write_outputs(report: &ReliabilityReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Json => put("report.json".into(), to_json(report)?)?,
            ReportFormat::Markdown => put("report.md".into(), to_markdown(report))?,
        }
    }
    if let Some(ccm) = report.ccm.ok() {
        for d in &ccm.devices {
            put(ccm_file_name(d), to_json(&d.ccm)?)?;
        }
    }
    Ok(written)
}

fn n3(v: f64) -> String {
    format!("{v:.3}")
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), n3)
}

fn basis_note(b: Basis) -> &'static str {
    match b {
        Basis::Raw => "raw colours",
        Basis::Corrected => "consumer devices corrected by their full-data CCM",
    }
}

fn skipped<T>(out: &mut String, s: &Section<T>) -> bool {
    if let Section::Skipped { reason } = s {
        let _ = writeln!(out, "_Skipped: {reason}._\n");
        true
    } else {
        false
    }
}

pub fn to_markdown(r: &ReliabilityReport) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# Inter-device reliability report\n");
    let _ = writeln!(
        o,
        "Report version {}, tool version {}, seed {}, reference device `{}`.\n",
        r.report_version, r.tool_version, r.seed, r.config.reference_device
    );
    let _ = writeln!(
        o,
        "Numbers are rounded to 3 decimals (exact binary value, halves to even); report.json holds full precision.\n"
    );

    let d = &r.dataset;
    let _ = writeln!(o, "## Dataset\n");
    let _ = writeln!(o, "{} records, {} subjects.\n", d.records, d.subjects);
    let _ = writeln!(o, "| Device | Records | Subjects | Mean L* | Mean a* | Mean b* | SD L* | SD a* | SD b* |");
    let _ = writeln!(o, "|---|---|---|---|---|---|---|---|---|");
    for dev in &d.devices {
        let name = if dev.reference {
            format!("{} (reference)", dev.device)
        } else {
            dev.device.clone()
        };
        let _ = writeln!(
            o,
            "| {name} | {} | {} | {} | {} | {} | {} | {} | {} |",
            dev.records,
            dev.subjects,
            n3(dev.mean_lab[0]),
            n3(dev.mean_lab[1]),
            n3(dev.mean_lab[2]),
            n3(dev.sd_lab[0]),
            n3(dev.sd_lab[1]),
            n3(dev.sd_lab[2])
        );
    }
    let _ = writeln!(o);
    let _ = writeln!(o, "| Region | Records |\n|---|---|");
    for reg in &d.regions {
        let _ = writeln!(o, "| {} | {} |", reg.region, reg.records);
    }
    let _ = writeln!(o);

    if let Some(p) = r.pairing.ok() {
        let _ = writeln!(o, "## Pairing\n");
        let _ = writeln!(o, "| Device | Paired | Unmatched |\n|---|---|---|");
        for c in &p.devices {
            let _ = writeln!(o, "| {} | {} | {} |", c.device, c.paired, c.unmatched);
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "## Colour difference (ΔE00)\n");
    if !skipped(&mut o, &r.deltae) {
        let s = r.deltae.ok().expect("section present");
        let _ = writeln!(
            o,
            "| Pair | n | Mean | SD | Median | 95th pct | Fraction < {} |",
            n3(s.threshold)
        );
        let _ = writeln!(o, "|---|---|---|---|---|---|---|");
        for p in &s.pairs {
            let _ = writeln!(
                o,
                "| {} vs {} | {} | {} | {} | {} | {} | {} |",
                p.device_a,
                p.device_b,
                p.delta_e.n,
                n3(p.delta_e.mean),
                n3(p.delta_e.sd),
                n3(p.delta_e.median),
                n3(p.delta_e.p95),
                n3(p.acceptable_fraction)
            );
        }
        let _ = writeln!(
            o,
            "\nAll consumer-vs-reference pairs: mean {}, fraction below threshold {}.\n",
            n3(s.pooled_vs_reference.mean),
            n3(s.pooled_acceptable_fraction)
        );
    }

    let _ = writeln!(o, "## Colour correction (cross-validated)\n");
    if !skipped(&mut o, &r.ccm) {
        let s = r.ccm.ok().expect("section present");
        let _ = writeln!(o, "| Device | Folds | Samples | ΔE00 before | ΔE00 after | Improvement % |");
        let _ = writeln!(o, "|---|---|---|---|---|---|");
        for c in &s.devices {
            let cv = &c.crossval;
            let _ = writeln!(
                o,
                "| {} → {} | {} | {} | {} ± {} | {} ± {} | {} |",
                c.device,
                c.reference_device,
                cv.fold_count,
                cv.sample_count,
                n3(cv.before.mean),
                n3(cv.before.sd),
                n3(cv.after.mean),
                n3(cv.after.sd),
                opt3(cv.improvement_pct)
            );
        }
        let _ = writeln!(
            o,
            "\nPooled held-out ΔE00: before {}, after {}, improvement {} %.\n",
            n3(s.pooled_before_mean),
            n3(s.pooled_after_mean),
            opt3(s.pooled_improvement_pct)
        );
        for c in &s.devices {
            if let Some(w) = &c.ccm.warning {
                let _ = writeln!(o, "Warning for {}: {w}\n", c.device);
            }
        }
    }

    let _ = writeln!(o, "## Clinical indices\n");
    if !skipped(&mut o, &r.indices) {
        let s = r.indices.ok().expect("section present");
        let _ = writeln!(o, "| Device | Basis | Melanin index | Erythema index | ITA (°) | Degenerate ITA |");
        let _ = writeln!(o, "|---|---|---|---|---|---|");
        for row in &s.rows {
            let basis = match row.basis {
                Basis::Raw => "raw",
                Basis::Corrected => "corrected",
            };
            let _ = writeln!(
                o,
                "| {} | {basis} | {} ± {} | {} ± {} | {} ± {} | {} |",
                row.device,
                n3(row.melanin_index.mean),
                n3(row.melanin_index.sd),
                n3(row.erythema_index.mean),
                n3(row.erythema_index.sd),
                n3(row.ita_degrees.mean),
                n3(row.ita_degrees.sd),
                row.ita_degenerate
            );
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "## Inter-device reliability (ICC)\n");
    if !skipped(&mut o, &r.icc) {
        let s = r.icc.ok().expect("section present");
        let _ = writeln!(
            o,
            "{}, raters {}, {} targets ({} incomplete dropped), {}.\n",
            s.form.label(),
            s.raters.join(", "),
            s.targets,
            s.dropped_targets,
            basis_note(s.basis)
        );
        let _ = writeln!(o, "| Measure | ICC | 95% CI | Interpretation |\n|---|---|---|---|");
        for m in &s.measures {
            let _ = writeln!(
                o,
                "| {} | {} | [{}, {}] | {} |",
                m.measure,
                n3(m.result.icc),
                n3(m.result.ci_low),
                n3(m.result.ci_high),
                m.result.interpretation
            );
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "## Bland–Altman\n");
    if !skipped(&mut o, &r.bland_altman) {
        let s = r.bland_altman.ok().expect("section present");
        let _ = writeln!(o, "Differences are device minus reference, {}.\n", basis_note(s.basis));
        let _ = writeln!(o, "| Device | Channel | n | Bias | SD | Lower LoA | Upper LoA |");
        let _ = writeln!(o, "|---|---|---|---|---|---|---|");
        for row in &s.rows {
            let b = &row.result;
            let _ = writeln!(
                o,
                "| {} | {} | {} | {} | {} | {} | {} |",
                row.device,
                row.channel,
                b.n,
                n3(b.bias),
                n3(b.sd),
                n3(b.loa_low),
                n3(b.loa_high)
            );
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "## Variance sources (one-way ANOVA)\n");
    if !skipped(&mut o, &r.anova) {
        let s = r.anova.ok().expect("section present");
        let _ = writeln!(
            o,
            "Response: {}. Bonferroni-adjusted at α = {}. η² values are one-way and not additive across factors.\n",
            s.response,
            n3(s.alpha)
        );
        let _ = writeln!(o, "| Factor | Groups | F | p | Adjusted p | η² | Effect size | Significant |");
        let _ = writeln!(o, "|---|---|---|---|---|---|---|---|");
        for e in &s.rows {
            let a = &e.anova;
            let _ = writeln!(
                o,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                a.factor,
                a.groups,
                opt3(a.f_statistic),
                n3(a.p_value),
                n3(e.p_adjusted),
                n3(a.eta_squared),
                a.effect_size,
                if e.significant { "yes" } else { "no" }
            );
        }
        for f in &s.skipped {
            let _ = writeln!(o, "\nFactor {} skipped: {}.", f.factor, f.reason);
        }
        let _ = writeln!(o);
    }

    let _ = writeln!(o, "## ITA sensitivity\n");
    if !skipped(&mut o, &r.sensitivity) {
        let s = r.sensitivity.ok().expect("section present");
        let _ = writeln!(
            o,
            "At L*a*b* = ({}, {}, {}): ∂ITA/∂L* = {} °/unit ({} rad), ∂ITA/∂b* = {} °/unit ({} rad), |∂ITA/∂b*| / |∂ITA/∂L*| = {}.\n",
            n3(s.at_lab[0]),
            n3(s.at_lab[1]),
            n3(s.at_lab[2]),
            n3(s.d_ita_d_l_deg),
            n3(s.d_ita_d_l_rad),
            n3(s.d_ita_d_b_deg),
            n3(s.d_ita_d_b_rad),
            opt3(s.b_to_l_ratio)
        );
    }

    let _ = writeln!(
        o,
        "Limitations: devices are modelled up to a linear colour transform; tone mapping and other camera pipeline nonlinearities are not corrected."
    );
    o
}
