//! CSV and markdown output of verification runs, and the cone description.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::charfn;
use crate::cone::{ConeModel, ConeSpec};
use crate::error::{ConeError, Result};
use crate::harness::{ConditionReport, InequalityCase, ProbeReport, SweepPoint, VerificationReport};
use crate::mc::{McConfig, McEstimate};
use crate::star;
use crate::util::fmt_f64;

/// One CSV line; every number goes through [`fmt_f64`] so output is
/// byte-stable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub theorem: String,
    pub cone: String,
    pub p: String,
    pub q: String,
    pub gamma: String,
    pub alpha: String,
    pub r: String,
    pub function_id: String,
    pub lhs: String,
    pub lhs_stderr: String,
    pub rhs: String,
    pub rhs_stderr: String,
    pub ratio: String,
    pub verdict: String,
}

fn case_row(case: &InequalityCase, function_id: &str, verdict: &str) -> CsvRow {
    CsvRow {
        theorem: case.theorem.to_string(),
        cone: case.cone.label().to_string(),
        p: fmt_f64(case.p),
        q: fmt_f64(case.q),
        gamma: fmt_f64(case.gamma),
        alpha: case.alpha.map(fmt_f64).unwrap_or_default(),
        r: fmt_f64(case.r),
        function_id: function_id.to_string(),
        lhs: String::new(),
        lhs_stderr: String::new(),
        rhs: String::new(),
        rhs_stderr: String::new(),
        ratio: String::new(),
        verdict: verdict.to_string(),
    }
}

fn with_values(mut row: CsvRow, lhs: &McEstimate, rhs: &McEstimate, ratio: f64) -> CsvRow {
    row.lhs = fmt_f64(lhs.value);
    row.lhs_stderr = fmt_f64(lhs.stderr);
    row.rhs = fmt_f64(rhs.value);
    row.rhs_stderr = fmt_f64(rhs.stderr);
    row.ratio = fmt_f64(ratio);
    row
}

/// Collects CSV rows and the markdown body of one run.
#[derive(Default)]
pub struct RunReport {
    pub rows: Vec<CsvRow>,
    markdown: String,
    pub failures: usize,
}

impl RunReport {
    pub fn new(title: &str, cfg: &McConfig) -> Self {
        let mut r = RunReport::default();
        let _ = writeln!(
            r.markdown,
            "# {title}\n\nsamples N = {} (ratios at 4N), seed = {}\n",
            cfg.samples, cfg.seed
        );
        r
    }

    fn conditions(&mut self, c: &ConditionReport) {
        let md = &mut self.markdown;
        let _ = writeln!(md, "- condition: {}", c.statement);
        let _ = writeln!(md, "- satisfied: {}, margin {}", c.satisfied, fmt_f64(c.margin));
        let _ = writeln!(md, "- sigma(V) = {}, sigma(V*) = {}", fmt_f64(c.sigma), fmt_f64(c.sigma_dual));
        if let Some(d) = c.witness_delta {
            let _ = writeln!(md, "- witness delta = {}", fmt_f64(d));
        }
        for n in &c.notes {
            let _ = writeln!(md, "- note: {n}");
        }
    }

    pub fn verification(&mut self, r: &VerificationReport) {
        let verdict = r.verdict.to_string();
        for f in &r.per_function {
            self.rows
                .push(with_values(case_row(&r.case, &f.function_id, &verdict), &f.lhs, &f.rhs, f.ratio));
        }
        let _ = writeln!(self.markdown, "## {}\n", r.case);
        self.conditions(&r.conditions);
        let md = &mut self.markdown;
        let _ = writeln!(md, "\n| function | lhs | rhs | ratio (N) | ratio (4N) | status |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for f in &r.per_function {
            let _ = writeln!(
                md,
                "| `{}` | {} ± {} | {} ± {} | {} | {} | {:?} |",
                f.function_id,
                fmt_f64(f.lhs.value),
                fmt_f64(f.lhs.stderr),
                fmt_f64(f.rhs.value),
                fmt_f64(f.rhs.stderr),
                fmt_f64(f.ratio_n),
                fmt_f64(f.ratio),
                f.status
            );
            for w in [&f.lhs.warning, &f.rhs.warning].into_iter().flatten() {
                let _ = writeln!(md, "|  | warning: {w} | | | | |");
            }
        }
        let _ = writeln!(md, "\nmax ratio {}, verdict **{}**\n", fmt_f64(r.max_ratio), r.verdict);
    }

    pub fn probe(&mut self, r: &ProbeReport) {
        let verdict = if r.unbounded { "probe:unbounded" } else { "probe:bounded" };
        for row in &r.rows {
            let id = format!("probe[b={}]:{}", fmt_f64(row.truncation), row.function_id);
            self.rows.push(with_values(case_row(&r.case, &id, verdict), &row.lhs, &row.rhs, row.ratio));
        }
        let _ = writeln!(
            self.markdown,
            "### probe: {}\n\ngrowth per decade {}, unbounded: **{}**\n",
            r.case,
            fmt_f64(r.growth_per_decade),
            r.unbounded
        );
    }

    pub fn error(&mut self, case: &InequalityCase, e: &ConeError) {
        self.failures += 1;
        let mut row = case_row(case, "", "error");
        row.function_id = e.to_string();
        self.rows.push(row);
        let _ = writeln!(self.markdown, "## {case}\n\nerror: {e}\n");
    }

    /// A case that could not even be built from its config.
    pub fn config_error(&mut self, label: &str, e: &ConeError) {
        self.failures += 1;
        self.rows.push(CsvRow {
            theorem: label.to_string(),
            cone: String::new(),
            p: String::new(),
            q: String::new(),
            gamma: String::new(),
            alpha: String::new(),
            r: String::new(),
            function_id: e.to_string(),
            lhs: String::new(),
            lhs_stderr: String::new(),
            rhs: String::new(),
            rhs_stderr: String::new(),
            ratio: String::new(),
            verdict: "error".into(),
        });
        let _ = writeln!(self.markdown, "## {label}\n\nerror: {e}\n");
    }

    pub fn sweep_point(&mut self, case: &InequalityCase, pt: &SweepPoint) {
        let c = case.clone().with_exponent(pt.value);
        match &pt.verify {
            Ok(r) => self.verification(r),
            Err(e) => {
                if let Ok(cond) = &pt.conditions {
                    let _ = writeln!(self.markdown, "## {c}\n");
                    self.conditions(cond);
                    let _ = writeln!(self.markdown);
                }
                self.error(&c, e)
            }
        }
        match &pt.probe {
            Some(Ok(p)) => self.probe(p),
            Some(Err(e)) => self.error(&c, e),
            None => {}
        }
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER).map_err(|e| ConeError::Config(e.to_string()))?;
        }
        for r in &self.rows {
            w.serialize(r).map_err(|e| ConeError::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ConeError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn markdown(&self) -> &str {
        &self.markdown
    }

    /// Writes `<stem>.csv` and `<stem>.md` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| ConeError::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.csv_string()?).map_err(|e| ConeError::io(&csv, e))?;
        let md = dir.join(format!("{stem}.md"));
        std::fs::write(&md, &self.markdown).map_err(|e| ConeError::io(&md, e))
    }
}

pub const CSV_HEADER: [&str; 14] = [
    "theorem",
    "cone",
    "p",
    "q",
    "gamma",
    "alpha",
    "r",
    "function_id",
    "lhs",
    "lhs_stderr",
    "rhs",
    "rhs_stderr",
    "ratio",
    "verdict",
];

fn est(e: &McEstimate) -> String {
    format!("{} ± {}", fmt_f64(e.value), fmt_f64(e.stderr))
}

/// Product of two estimates with first-order error propagation.
fn product(a: &McEstimate, b: &McEstimate) -> McEstimate {
    let v = a.value * b.value;
    let rel = (a.relative_error().powi(2) + b.relative_error().powi(2)).sqrt();
    McEstimate {
        value: v,
        stderr: v.abs() * rel,
        samples_used: a.samples_used + b.samples_used,
        diverged: a.diverged || b.diverged,
        warning: None,
    }
}

/// Markdown description: dual model, σ, fixed point and the duality
/// constants Δ_V(x)Δ_{V*}(x*) and φ_V(x)φ_{V*}(x*), closed form and by MC
/// at the fixed point.
pub fn describe_cone(cone: &ConeModel, cfg: &McConfig) -> Result<String> {
    let mut md = String::new();
    let dual = cone.dual();
    let json = |c: &ConeModel| serde_json::to_string(&ConeSpec::from(c.clone())).unwrap_or_default();
    let _ = writeln!(md, "# {}\n", cone.label());
    let _ = writeln!(md, "- kind: {}", cone.kind_name());
    let _ = writeln!(md, "- dimension: {}", cone.dim());
    let _ = writeln!(md, "- self-dual: {}", cone.is_self_dual());
    let _ = writeln!(md, "- model: `{}`", json(cone));
    let _ = writeln!(md, "- dual model: `{}`", json(&dual));
    let s = charfn::sigma0(cone);
    let sd = charfn::sigma0(&dual);
    let _ = writeln!(md, "- sigma0(V) = {}, sigma(V) = {}", fmt_f64(s.sigma0), fmt_f64(s.sigma));
    let _ = writeln!(md, "- sigma0(V*) = {}, sigma(V*) = {}", fmt_f64(sd.sigma0), fmt_f64(sd.sigma));
    let fp = star::fixed_point(cone, 1e-12)?;
    let shown = crate::linalg::Point(fp.0.iter().map(|v| (v * 1e10).round() / 1e10).collect());
    let _ = writeln!(md, "- fixed point x = x*: {shown}");
    let xs = star::star_point(cone, &fp)?;
    let _ = writeln!(md, "\n## duality constants at the fixed point\n");
    let _ = writeln!(md, "| quantity | closed form | Monte Carlo |");
    let _ = writeln!(md, "|---|---|---|");
    let dd = charfn::delta(cone, &fp)? * charfn::delta(&dual, &xs)?;
    let dd_mc = product(&charfn::delta_mc(cone, &fp, cfg)?, &charfn::delta_mc(&dual, &xs, cfg)?);
    let _ = writeln!(md, "| Δ_V(x)·Δ_V*(x*) | {} | {} |", fmt_f64(dd), est(&dd_mc));
    let pp = charfn::phi(cone, &fp)? * charfn::phi(&dual, &xs)?;
    let pp_mc = product(&charfn::phi_mc(cone, &fp, cfg)?, &charfn::phi_mc(&dual, &xs, cfg)?);
    let _ = writeln!(md, "| φ_V(x)·φ_V*(x*) | {} | {} |", fmt_f64(pp), est(&pp_mc));
    let k = star::jacobian_K(cone, &fp)?;
    let kd = k.determinant() * charfn::delta(cone, &fp)?.powi(2);
    let _ = writeln!(md, "| det K_V(x)·Δ_V(x)² | {} | |", fmt_f64(kd));
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Theorem;

    #[test]
    fn error_rows_keep_the_columns() {
        let case = InequalityCase::new(Theorem::T3_3, ConeModel::orthant(2).unwrap(), 2.0, 2.0, 0.0);
        let mut r = RunReport::new("t", &McConfig::default());
        r.error(&case, &ConeError::MissingDecay);
        let csv = r.csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let row = lines.next().unwrap();
        assert!(row.starts_with("T3.3,orthant(2),2,2,0,,1,"), "{row}");
        assert!(row.ends_with(",error"));
        assert_eq!(r.failures, 1);
    }

    #[test]
    fn describes_orthant() {
        let md = describe_cone(&ConeModel::orthant(3).unwrap(), &McConfig::new(20_000, 1)).unwrap();
        assert!(md.contains("fixed point x = x*: (1,1,1)"), "{md}");
        assert!(md.contains("sigma(V) = -1"));
    }
}
