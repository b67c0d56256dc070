//! Flat `key = value` model descriptions.
//!
//! ```text
//! # binomial-logit with a normal regressor
//! family = binomial
//! m = 1
//! link = logit
//! partition = 2
//! beta = 0.3, -0.5
//! regressors = const:1, std_normal
//! ```
//!
//! Lines are `key = value`, `#` starts a comment, every key appears at most
//! once and unknown keys are rejected. List values are comma separated; rows
//! of `points` and `design_rows` are separated by `;`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use evglm::glm::{CoordSampler, PastFamily};
use evglm::{DesignScheme, ErrorFamily, GlmSpec, LinkFunction, PartitionSpec, RegressorSampler};

const KEYS: &[&str] = &[
    "family",
    "m",
    "sd",
    "link",
    "partition",
    "beta",
    "carrier",
    "regressors",
    "points",
    "design",
    "design_rows",
    "n_ladder",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based line, 0 when the problem is a missing key.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Carrier {
    Sampler(RegressorSampler),
    Design(DesignScheme),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpecFile {
    pub family: ErrorFamily<f64>,
    pub link: LinkFunction,
    pub partition: PartitionSpec,
    pub beta: Vec<f64>,
    pub carrier: Option<Carrier>,
    pub n_ladder: Option<Vec<usize>>,
}

impl ModelSpecFile {
    pub fn glm(&self) -> GlmSpec<f64> {
        GlmSpec::new(self.family, self.link.clone(), self.partition.clone()).expect("validated when parsed")
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut entries: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ParseError { line, message: format!("expected 'key = value', found '{content}'") });
            };
            let key = key.trim();
            let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
                return Err(ParseError { line, message: format!("unknown key '{key}'") });
            };
            if let Some((first, _)) = entries.insert(key, (line, value.trim())) {
                return Err(ParseError { line, message: format!("duplicate key '{key}' (first on line {first})") });
            }
        }
        Parser { entries }.build()
    }

    /// Canonical text form; `parse(to_text())` gives back `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        let family = match self.family {
            ErrorFamily::Binomial { .. } => "binomial",
            ErrorFamily::GaussLoc { .. } => "gauss_loc",
            f => f.name(),
        };
        put("family", family.into());
        match self.family {
            ErrorFamily::Binomial { m } => put("m", m.to_string()),
            ErrorFamily::GaussLoc { sd } => put("sd", sd.to_string()),
            _ => {}
        }
        put("link", self.link.to_string());
        put("partition", join(self.partition.block_dims()));
        put("beta", join(&self.beta));
        match &self.carrier {
            Some(Carrier::Sampler(RegressorSampler::Coords { coords })) => {
                put("carrier", "sampler".into());
                put("regressors", coords.iter().map(coord_text).collect::<Vec<_>>().join(", "));
            }
            Some(Carrier::Sampler(RegressorSampler::Points { points })) => {
                put("carrier", "sampler".into());
                put("points", rows_text(points));
            }
            Some(Carrier::Design(scheme)) => {
                put("carrier", "design".into());
                match scheme {
                    DesignScheme::InverseN { .. } => put("design", "inverse_n".into()),
                    DesignScheme::Cyclic { rows } => {
                        put("design", "cyclic".into());
                        put("design_rows", rows_text(rows));
                    }
                    DesignScheme::Spike { rows } => {
                        put("design", "spike".into());
                        put("design_rows", rows_text(rows));
                    }
                }
            }
            None => {}
        }
        if let Some(n) = &self.n_ladder {
            put("n_ladder", join(n));
        }
        out
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn rows_text(rows: &[Vec<f64>]) -> String {
    rows.iter().map(|r| join(r)).collect::<Vec<_>>().join("; ")
}

fn coord_text(c: &CoordSampler) -> String {
    match c {
        CoordSampler::Const { value } => format!("const:{value}"),
        CoordSampler::StdNormal => "std_normal".into(),
        CoordSampler::LogNormal { mu, sd } => format!("lognormal:{mu}:{sd}"),
        CoordSampler::Cauchy => "cauchy".into(),
        CoordSampler::LogPast { family, sigma, xi, floor } => {
            let f = match family {
                PastFamily::Gevd => "gevd",
                PastFamily::Gpd => "gpd",
            };
            format!("log_past:{f}:{sigma}:{xi}:{floor}")
        }
    }
}

struct Parser<'a> {
    entries: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Parser<'a> {
    fn get(&self, key: &str) -> Option<(usize, &'a str)> {
        self.entries.get(key).copied()
    }

    fn require(&self, key: &str) -> Result<(usize, &'a str), ParseError> {
        self.get(key).ok_or_else(|| ParseError { line: 0, message: format!("missing required key '{key}'") })
    }

    fn list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ParseError>
    where
        T::Err: fmt::Display,
    {
        value
            .split(',')
            .map(|s| {
                s.trim().parse::<T>().map_err(|e| ParseError { line, message: format!("{key}: '{}': {e}", s.trim()) })
            })
            .collect()
    }

    fn rows(line: usize, key: &str, value: &str) -> Result<Vec<Vec<f64>>, ParseError> {
        value.split(';').map(|r| Self::list(line, key, r)).collect()
    }

    fn build(self) -> Result<ModelSpecFile, ParseError> {
        let lift = |line: usize| move |e: evglm::Error| ParseError { line, message: e.to_string() };
        let (fl, fam) = self.require("family")?;
        let only_for = |key: &str, fam_name: &str| -> Result<(), ParseError> {
            match self.get(key) {
                Some((line, _)) if fam != fam_name => {
                    Err(ParseError { line, message: format!("'{key}' only applies to family {fam_name}") })
                }
                _ => Ok(()),
            }
        };
        only_for("m", "binomial")?;
        only_for("sd", "gauss_loc")?;
        let family = match fam {
            "gevd" => ErrorFamily::Gevd,
            "gpd" => ErrorFamily::Gpd,
            "poisson" => ErrorFamily::Poisson,
            "binomial" => {
                let m = match self.get("m") {
                    Some((line, v)) => v.parse::<u32>().ok().filter(|&m| m >= 1).ok_or_else(|| ParseError {
                        line,
                        message: format!("m must be a positive integer, got '{v}'"),
                    })?,
                    None => 1,
                };
                ErrorFamily::Binomial { m }
            }
            "gauss_loc" => {
                let sd = match self.get("sd") {
                    Some((line, v)) => v.parse::<f64>().ok().filter(|s| *s > 0.0 && s.is_finite()).ok_or_else(|| {
                        ParseError { line, message: format!("sd must be positive, got '{v}'") }
                    })?,
                    None => 1.0,
                };
                ErrorFamily::GaussLoc { sd }
            }
            other => return Err(ParseError { line: fl, message: format!("unknown family '{other}'") }),
        };
        let (ll, link) = self.require("link")?;
        let link: LinkFunction = link.parse().map_err(lift(ll))?;
        if link.k() != family.dim() {
            return Err(ParseError {
                line: ll,
                message: format!("{} links given, family {} has {} parameters", link.k(), family.name(), family.dim()),
            });
        }
        let (bl, beta) = self.require("beta")?;
        let beta: Vec<f64> = Self::list(bl, "beta", beta)?;
        let partition = match self.get("partition") {
            Some((line, v)) => PartitionSpec::new(Self::list(line, "partition", v)?).map_err(lift(line))?,
            None if link.k() == 1 => PartitionSpec::single(beta.len()).map_err(lift(bl))?,
            None => return Err(ParseError { line: 0, message: "missing required key 'partition'".into() }),
        };
        if partition.k() != link.k() {
            let line = self.get("partition").map_or(ll, |(l, _)| l);
            return Err(ParseError {
                line,
                message: format!("partition has {} blocks but the link has {} coordinates", partition.k(), link.k()),
            });
        }
        if beta.len() != partition.p() {
            return Err(ParseError {
                line: bl,
                message: format!("beta has {} entries, partition needs {}", beta.len(), partition.p()),
            });
        }
        let carrier = self.carrier(partition.p())?;
        let n_ladder = match self.get("n_ladder") {
            Some((line, v)) => Some(Self::list(line, "n_ladder", v)?),
            None => None,
        };
        Ok(ModelSpecFile { family, link, partition, beta, carrier, n_ladder })
    }

    fn carrier(&self, p: usize) -> Result<Option<Carrier>, ParseError> {
        let sampler_keys = ["regressors", "points"].iter().find_map(|k| self.get(k).map(|e| (*k, e)));
        let design_keys = ["design", "design_rows"].iter().find_map(|k| self.get(k).map(|e| (*k, e)));
        let mode = match self.get("carrier") {
            Some((line, "sampler")) => Some((line, true)),
            Some((line, "design")) => Some((line, false)),
            Some((line, other)) => {
                return Err(ParseError { line, message: format!("carrier must be 'sampler' or 'design', got '{other}'") })
            }
            None => None,
        };
        let sampler = match (mode, sampler_keys, design_keys) {
            (Some((_, s)), _, _) => s,
            (None, Some(_), None) => true,
            (None, None, Some(_)) => false,
            (None, None, None) => return Ok(None),
            (None, Some(_), Some((_, (line, _)))) => {
                return Err(ParseError { line, message: "both sampler and design keys given; set 'carrier'".into() })
            }
        };
        let (wrong, right) = if sampler { (design_keys, sampler_keys) } else { (sampler_keys, design_keys) };
        if let Some((k, (line, _))) = wrong {
            return Err(ParseError { line, message: format!("'{k}' does not apply to this carrier") });
        }
        let check_p = |line: usize, got: usize| {
            if got == p {
                Ok(())
            } else {
                Err(ParseError { line, message: format!("regressor dimension {got}, model has p = {p}") })
            }
        };
        if sampler {
            if self.get("regressors").is_some() && self.get("points").is_some() {
                let (line, _) = self.get("points").unwrap();
                return Err(ParseError { line, message: "give either 'regressors' or 'points', not both".into() });
            }
            let Some((key, (line, value))) = right else {
                return Err(ParseError { line: 0, message: "sampler carrier needs 'regressors' or 'points'".into() });
            };
            let s = if key == "points" {
                let rows = Self::rows(line, "points", value)?;
                RegressorSampler::points(rows)
            } else {
                let coords = value.split(',').map(|t| parse_coord(t.trim())).collect::<Result<Vec<_>, _>>();
                let coords = coords.map_err(|message| ParseError { line, message })?;
                RegressorSampler::coords(coords)
            }
            .map_err(|e| ParseError { line, message: e.to_string() })?;
            check_p(line, s.p())?;
            Ok(Some(Carrier::Sampler(s)))
        } else {
            let (line, scheme) =
                self.get("design").ok_or_else(|| ParseError { line: 0, message: "design carrier needs 'design'".into() })?;
            let rows = |line| match self.get("design_rows") {
                Some((l, v)) => Self::rows(l, "design_rows", v),
                None => Err(ParseError { line, message: format!("design '{scheme}' needs 'design_rows'") }),
            };
            let scheme = match scheme {
                "inverse_n" => {
                    if let Some((l, _)) = self.get("design_rows") {
                        return Err(ParseError { line: l, message: "inverse_n takes no design_rows".into() });
                    }
                    DesignScheme::InverseN { p }
                }
                "cyclic" => DesignScheme::Cyclic { rows: rows(line)? },
                "spike" => DesignScheme::Spike { rows: rows(line)? },
                other => return Err(ParseError { line, message: format!("unknown design '{other}'") }),
            };
            let row_line = self.get("design_rows").map_or(line, |(l, _)| l);
            if let DesignScheme::Cyclic { rows } | DesignScheme::Spike { rows } = &scheme {
                if let Some(r) = rows.iter().find(|r| r.len() != p) {
                    check_p(row_line, r.len())?;
                }
            }
            scheme.design::<f64>(1).map_err(|e| ParseError { line: row_line, message: e.to_string() })?;
            Ok(Some(Carrier::Design(scheme)))
        }
    }
}

fn parse_coord(token: &str) -> Result<CoordSampler, String> {
    let parts: Vec<&str> = token.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("'{token}': {e}"));
    let arity = |n: usize| {
        if parts.len() == n + 1 {
            Ok(())
        } else {
            Err(format!("'{token}': {} takes {n} parameter(s)", parts[0]))
        }
    };
    match parts[0] {
        "const" => {
            arity(1)?;
            Ok(CoordSampler::Const { value: num(parts[1])? })
        }
        "std_normal" => arity(0).map(|_| CoordSampler::StdNormal),
        "cauchy" => arity(0).map(|_| CoordSampler::Cauchy),
        "lognormal" => {
            arity(2)?;
            Ok(CoordSampler::LogNormal { mu: num(parts[1])?, sd: num(parts[2])? })
        }
        "log_past" => {
            arity(4)?;
            let family = match parts[1] {
                "gevd" => PastFamily::Gevd,
                "gpd" => PastFamily::Gpd,
                f => return Err(format!("'{token}': unknown past family '{f}'")),
            };
            Ok(CoordSampler::LogPast { family, sigma: num(parts[2])?, xi: num(parts[3])?, floor: num(parts[4])? })
        }
        other => Err(format!("unknown regressor sampler '{other}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BINOMIAL: &str = "# binomial-logit\nfamily = binomial\nm = 1\nlink = logit\nbeta = 0.3, -0.5\nregressors = const:1, std_normal  # intercept + N(0,1)\n";

    #[test]
    fn parses_sampler_spec() {
        let s = ModelSpecFile::parse(BINOMIAL).unwrap();
        assert_eq!(s.family, ErrorFamily::Binomial { m: 1 });
        assert_eq!(s.partition.block_dims(), &[2]);
        assert!(matches!(s.carrier, Some(Carrier::Sampler(RegressorSampler::Coords { .. }))));
    }

    #[test]
    fn round_trip() {
        let texts = [
            BINOMIAL.to_string(),
            "family = gevd\nlink = log, shape_gevd_shifted\npartition = 1, 1\nbeta = 0, 1\nregressors = const:1, log_past:gevd:1:0.3:1\n".into(),
            "family = poisson\nlink = identity\nbeta = 1\ndesign = inverse_n\nn_ladder = 50, 100\n".into(),
            "family = gauss_loc\nsd = 2.5\nlink = identity\nbeta = 1, 2\ncarrier = design\ndesign = spike\ndesign_rows = 1, 0.5; 1, -0.25\n".into(),
            "family = gpd\nlink = log,shape_gpd\npartition = 2,1\nbeta = 0.1,0.2,0.3\npoints = 1,2,3; 4,5,6\n".into(),
            "family = poisson\nlink = log\nbeta = 0.5, -0.3\n".into(),
        ];
        for t in texts {
            let a = ModelSpecFile::parse(&t).unwrap();
            let b = ModelSpecFile::parse(&a.to_text()).unwrap();
            assert_eq!(a, b, "{t}");
            assert_eq!(a.to_text(), b.to_text());
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("family = poisson\nlnk = log\n", 2, "unknown key"),
            ("family = poisson\nlink = log\nlink = log\n", 3, "duplicate"),
            ("family = poisson\nlink log\n", 2, "key = value"),
            ("family = poisson\nlink = log\nbeta = 1, x\n", 3, "beta"),
            ("family = weibull\nlink = log\nbeta = 1\n", 1, "unknown family"),
            ("family = poisson\nm = 3\nlink = log\nbeta = 1\n", 2, "only applies"),
            ("family = gevd\nlink = log\nbeta = 1\n", 2, "links given"),
            ("family = poisson\nlink = log\nbeta = 1, 2\nregressors = const:1\n", 4, "dimension"),
            ("family = poisson\nlink = log\nbeta = 1\ndesign = cyclic\n", 4, "design_rows"),
            ("family = poisson\nlink = log\nbeta = 1\nregressors = weird\n", 4, "unknown regressor"),
        ];
        for (text, line, needle) in cases {
            let e = ModelSpecFile::parse(text).unwrap_err();
            assert_eq!(e.line, line, "{text}: {e}");
            assert!(e.to_string().contains(needle), "{e}");
        }
        assert!(ModelSpecFile::parse("link = log\n").unwrap_err().message.contains("family"));
    }
}
