//! Reproduction number under treatment and the ranking of drug combinations.
//!
//! Rifampin scales transmission by `1 − ρ`, dapsone scales bacterial
//! production by `1 − ε` and clofazimine raises the recovery rate to `γ/(1 − c)`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::analysis::reproduction_number;
use crate::control::DrugMask;
use crate::error::{Error, Result};
use crate::model::{fmt_f64, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficacyProfile {
    /// Rifampin.
    pub rho: f64,
    /// Dapsone.
    pub epsilon: f64,
    /// Clofazimine.
    pub c: f64,
}

impl EfficacyProfile {
    pub fn new(rho: f64, epsilon: f64, c: f64) -> Result<Self> {
        let p = Self { rho, epsilon, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("epsilon", self.epsilon), ("c", self.c)] {
            if v == 1.0 {
                return Err(Error::SingularEfficacy(format!("{name} = 1")));
            }
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    reason: format!("efficacy must lie in [0, 1), got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Efficacies of drugs outside `mask` set to 0.
    pub fn masked(&self, mask: &DrugMask) -> Self {
        Self {
            rho: if mask.rifampin { self.rho } else { 0.0 },
            epsilon: if mask.dapsone { self.epsilon } else { 0.0 },
            c: if mask.clofazimine { self.c } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardRatios {
    pub rifampin: f64,
    pub dapsone: f64,
    pub clofazimine: f64,
}

/// `R0` with the masked drugs' efficacies applied.
pub fn modified_r0(
    params: &ParameterSet,
    profile: &EfficacyProfile,
    mask: &DrugMask,
) -> Result<f64> {
    params.validate()?;
    let e = profile.masked(mask);
    e.validate()?;
    let p = params;
    let recovery = p.gamma / (1.0 - e.c) + p.mu1;
    let den = recovery * (p.delta + p.mu1) * (p.y() + p.mu2);
    if den == 0.0 {
        return Err(Error::ZeroDenominator(
            "(γ/(1−c)+μ1)(δ+μ1)(y+μ2) = 0".into(),
        ));
    }
    Ok(p.alpha * (1.0 - e.epsilon) * p.beta * (1.0 - e.rho) * p.omega / den)
}

/// `(R0 − R̄0)/R0 · 100`.
pub fn percent_reduction(
    params: &ParameterSet,
    profile: &EfficacyProfile,
    mask: &DrugMask,
) -> Result<f64> {
    let r0 = reproduction_number(params)?;
    if r0 == 0.0 {
        return Err(Error::ZeroDenominator("R0 = 0".into()));
    }
    let treated = modified_r0(params, profile, mask)?;
    Ok((r0 - treated) / r0 * 100.0)
}

/// Rifampin gets `base`; the others are scaled down by their hazard ratio
/// relative to rifampin (higher hazard ratio, lower efficacy).
pub fn derive_efficacies(base: f64, hr: &HazardRatios) -> Result<EfficacyProfile> {
    if !(0.0..1.0).contains(&base) {
        return Err(Error::InvalidParameter {
            name: "base".into(),
            reason: format!("base efficacy must lie in [0, 1), got {base}"),
        });
    }
    for (name, v) in [
        ("rifampin", hr.rifampin),
        ("dapsone", hr.dapsone),
        ("clofazimine", hr.clofazimine),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter {
                name: format!("hazard_ratios.{name}"),
                reason: format!("must be > 0, got {v}"),
            });
        }
    }
    EfficacyProfile::new(
        base,
        base * hr.rifampin / hr.dapsone,
        base * hr.rifampin / hr.clofazimine,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEntry {
    pub modified_r0: f64,
    pub percent_reduction: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessRow {
    pub combination: DrugMask,
    /// One entry per efficacy level.
    pub levels: Vec<LevelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyLevel {
    pub name: String,
    pub profile: EfficacyProfile,
    /// True when two combinations tie and ranks fall back to row order.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub levels: Vec<EfficacyLevel>,
    pub rows: Vec<EffectivenessRow>,
}

impl RankingTable {
    /// Combinations from lowest to highest rank at level `l`.
    pub fn order(&self, l: usize) -> Vec<DrugMask> {
        let mut rows: Vec<&EffectivenessRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.levels[l].rank);
        rows.into_iter().map(|r| r.combination).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["combination".to_string()];
        for l in &self.levels {
            header.push(format!("pct_{}", l.name));
            header.push(format!("rank_{}", l.name));
        }
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut line = vec![r.combination.label()];
            for e in &r.levels {
                line.push(fmt_f64(e.percent_reduction));
                line.push(e.rank.to_string());
            }
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Ranks the seven standard combinations at each level; rank 1 is the
/// smallest reduction.
pub fn rank_with_profiles(
    params: &ParameterSet,
    levels: &[(String, EfficacyProfile)],
) -> Result<RankingTable> {
    let masks = DrugMask::STANDARD;
    let mut rows: Vec<EffectivenessRow> = masks
        .iter()
        .map(|&m| EffectivenessRow {
            combination: m,
            levels: Vec::with_capacity(levels.len()),
        })
        .collect();
    let mut out_levels = Vec::with_capacity(levels.len());
    for (name, profile) in levels {
        let pct: Vec<f64> = masks
            .iter()
            .map(|m| percent_reduction(params, profile, m))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..masks.len()).collect();
        order.sort_by(|&a, &b| pct[a].total_cmp(&pct[b]));
        let degenerate = order.windows(2).any(|w| pct[w[0]] == pct[w[1]]);
        let mut rank = vec![0; masks.len()];
        for (pos, &k) in order.iter().enumerate() {
            rank[k] = pos + 1;
        }
        for (k, row) in rows.iter_mut().enumerate() {
            row.levels.push(LevelEntry {
                modified_r0: modified_r0(params, profile, &masks[k])?,
                percent_reduction: pct[k],
                rank: rank[k],
            });
        }
        out_levels.push(EfficacyLevel {
            name: name.clone(),
            profile: *profile,
            degenerate,
        });
    }
    Ok(RankingTable {
        levels: out_levels,
        rows,
    })
}

/// [`rank_with_profiles`] with profiles from [`derive_efficacies`].
pub fn rank_combinations(
    params: &ParameterSet,
    bases: &[(&str, f64)],
    hr: &HazardRatios,
) -> Result<RankingTable> {
    let levels = bases
        .iter()
        .map(|&(name, base)| Ok((name.to_string(), derive_efficacies(base, hr)?)))
        .collect::<Result<Vec<_>>>()?;
    rank_with_profiles(params, &levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{table3, EFFICACY_LEVELS, HAZARD_RATIOS};
    use std::str::FromStr;

    fn mask(s: &str) -> DrugMask {
        DrugMask::from_str(s).unwrap()
    }

    #[test]
    fn empty_mask_is_r0() {
        let p = table3();
        let prof = EfficacyProfile::new(0.5, 0.5, 0.5).unwrap();
        assert_eq!(
            modified_r0(&p, &prof, &DrugMask::NONE).unwrap(),
            reproduction_number(&p).unwrap()
        );
        let zero = EfficacyProfile::default();
        let r = modified_r0(&p, &zero, &DrugMask::MDT).unwrap();
        assert!((r - reproduction_number(&p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rifampin_scales_r0() {
        let p = table3();
        let prof = EfficacyProfile::new(0.3, 0.0, 0.0).unwrap();
        let r = modified_r0(&p, &prof, &mask("rifampin")).unwrap();
        assert!((r - 0.7 * reproduction_number(&p).unwrap()).abs() < 1e-12);
        for (base, expect) in [(0.3, 30.0), (0.6, 60.0), (0.9, 90.0)] {
            let prof = EfficacyProfile::new(base, 0.0, 0.0).unwrap();
            let pct = percent_reduction(&p, &prof, &mask("rifampin")).unwrap();
            assert!((pct - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn published_pairs() {
        let p = table3();
        let prof = EfficacyProfile::new(0.3, 0.078788, 0.0).unwrap();
        let pct = percent_reduction(&p, &prof, &mask("rifampin+dapsone")).unwrap();
        assert!((pct - 35.516).abs() < 1e-3);
        let prof = EfficacyProfile::new(0.0, 0.157576, 0.0).unwrap();
        let pct = percent_reduction(&p, &prof, &mask("dapsone")).unwrap();
        assert!((pct - 15.75).abs() < 1e-2);
    }

    #[test]
    fn derived_efficacies() {
        let e = derive_efficacies(0.3, &HAZARD_RATIOS).unwrap();
        assert!((e.epsilon - 0.078788).abs() < 1e-6);
        assert!((e.c - 0.042162).abs() < 1e-6);
        let e = derive_efficacies(0.9, &HAZARD_RATIOS).unwrap();
        assert!((e.epsilon - 0.236364).abs() < 1e-6);
        // Inverse hazard scaling can push an efficacy to 1 or beyond.
        let hr = HazardRatios {
            rifampin: 2.0,
            dapsone: 1.0,
            clofazimine: 1.0,
        };
        assert!(derive_efficacies(0.6, &hr).is_err());
    }

    #[test]
    fn clofazimine_reduction_under_formula() {
        let p = table3();
        let e = derive_efficacies(0.3, &HAZARD_RATIOS).unwrap();
        let pct = percent_reduction(&p, &e, &mask("clofazimine")).unwrap();
        assert!((pct - 4.18).abs() < 0.01, "{pct}");
    }

    #[test]
    fn singular_clofazimine() {
        let prof = EfficacyProfile {
            rho: 0.0,
            epsilon: 0.0,
            c: 1.0,
        };
        assert!(matches!(
            modified_r0(&table3(), &prof, &mask("clofazimine")),
            Err(Error::SingularEfficacy(_))
        ));
    }

    #[test]
    fn zero_bases_are_degenerate() {
        let t = rank_combinations(&table3(), &[("LE", 0.0)], &HAZARD_RATIOS).unwrap();
        assert!(t.levels[0].degenerate);
        let ranks: Vec<usize> = t.rows.iter().map(|r| r.levels[0].rank).collect();
        assert_eq!(ranks, (1..=7).collect::<Vec<_>>());
        assert!(t.rows.iter().all(|r| r.levels[0].percent_reduction == 0.0));
    }

    #[test]
    fn standard_levels_csv_shape() {
        let t = rank_combinations(&table3(), &EFFICACY_LEVELS, &HAZARD_RATIOS).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "combination,pct_LE,rank_LE,pct_ME,rank_ME,pct_HE,rank_HE"
        );
        assert_eq!(lines.len(), 8);
        assert!(lines[7].starts_with("MDT,"));
        assert!(t.levels.iter().all(|l| !l.degenerate));
    }
}
