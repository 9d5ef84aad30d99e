//! JSON run configuration, schema version 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cone::{ConeModel, ConeSpec};
use crate::error::{ConeError, Result};
use crate::harness::{self, InequalityCase, KernelName, SweepParameter, Theorem};
use crate::mc::McConfig;
use crate::testfn::{FunctionSpec, TestFunction};
use crate::util::ext_f64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    DescribeCone,
    Selftest,
    Verify,
    Sweep,
    Sigma,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Informational; the subcommand on the command line decides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Default cone for cases without their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSpec>,
    #[serde(default)]
    pub cases: Vec<CaseSpec>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// α grid for the `sigma` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub theorem: Theorem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSpec>,
    #[serde(with = "ext_f64")]
    pub p: f64,
    #[serde(with = "ext_f64")]
    pub q: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    #[serde(default)]
    pub override_conditions: bool,
    /// Test functions; a theorem-specific default family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<FunctionSpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(src: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(src).map_err(|e| ConeError::Config(e.to_string()))?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(n) if n == SCHEMA_VERSION as u64 => {}
            Some(n) => {
                return Err(ConeError::Config(format!(
                    "unsupported schema_version {n} (this build reads {SCHEMA_VERSION})"
                )))
            }
            None => return Err(ConeError::Config("missing schema_version".into())),
        }
        serde_json::from_value(v).map_err(|e| ConeError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| ConeError::io(path, e))?;
        Self::from_json(&src).map_err(|e| match e {
            ConeError::Config(m) => ConeError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn cone_model(&self) -> Result<Option<ConeModel>> {
        self.cone.clone().map(ConeModel::try_from).transpose()
    }

    /// Every case with its family, resolved against the default cone.
    pub fn build_cases(&self) -> Result<Vec<(InequalityCase, Vec<TestFunction>)>> {
        let default = self.cone_model()?;
        self.cases.iter().map(|c| c.build(default.as_ref())).collect()
    }
}

impl CaseSpec {
    pub fn build(&self, default_cone: Option<&ConeModel>) -> Result<(InequalityCase, Vec<TestFunction>)> {
        let cone = match (&self.cone, default_cone) {
            (Some(s), _) => ConeModel::try_from(s.clone())?,
            (None, Some(c)) => c.clone(),
            (None, None) => return Err(ConeError::Config(format!("case {} has no cone", self.theorem))),
        };
        let mut case = InequalityCase::new(self.theorem, cone, self.p, self.q, self.gamma)
            .with_r(self.r)
            .overridden(self.override_conditions);
        case.alpha = self.alpha;
        case.delta = self.delta;
        if let Some(k) = self.kernel {
            case = case.with_kernel(k.spec(self.r)?);
        }
        let family = match &self.family {
            Some(fs) => fs
                .iter()
                .map(|s| TestFunction::from_spec(s, &case.cone))
                .collect::<Result<Vec<_>>>()?,
            None => harness::default_family(&case)?,
        };
        Ok((case, family))
    }
}
