//! Random scene generation with separation constraints.

use std::f64::consts::TAU;

use gesedd_core::matrix::cis;
use gesedd_core::model::{RadarParams, Scene, Target};
use gesedd_core::rng::Rng;
use rand::Rng as _;

use crate::config::{ResolutionAxis, SceneSection};
use crate::error::{HarnessError, Result};
use crate::metrics::circular_diff;

/// Candidate draws rejected before a scene is declared infeasible.
pub const MAX_REJECTIONS: usize = 100_000;

/// Consecutive rejections after which the Doppler placement restarts, since
/// sequential placement can jam with room left for a different layout.
const RESTART_AFTER: usize = 1_000;

struct Budget(usize);

impl Budget {
    fn reject(&mut self) -> Result<()> {
        self.0 += 1;
        if self.0 > MAX_REJECTIONS {
            return Err(HarnessError::Config(format!(
                "scene sampling exceeded {MAX_REJECTIONS} rejections; separations are infeasible"
            )));
        }
        Ok(())
    }
}

fn draw_amplitude(sec: &SceneSection, rng: &mut Rng) -> gesedd_core::C64 {
    let [lo, hi] = sec.amplitude_range;
    let mag = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    cis(rng.random_range(0.0..TAU)).scale(mag)
}

fn unit_amplitude(rng: &mut Rng) -> gesedd_core::C64 {
    cis(rng.random_range(0.0..TAU))
}

/// Uniform Doppler in the open band `(-1/2T, 1/2T)`.
fn draw_doppler(p: &RadarParams, rng: &mut Rng, budget: &mut Budget) -> Result<f64> {
    let edge = p.max_doppler();
    loop {
        let nu = rng.random_range(-edge..edge);
        if nu > -edge {
            return Ok(nu);
        }
        budget.reject()?;
    }
}

fn doppler_clear(nu: f64, taken: &[f64], sep: f64, p: &RadarParams) -> bool {
    taken
        .iter()
        .all(|&o| circular_diff(nu, o, 1.0 / p.pri()).abs() >= sep)
}

/// Draws a random scene per the scene section.
///
/// Distinct delays are at least `min_delay_sep_cells * tau0` apart and every
/// pair of Dopplers is at least `min_doppler_sep_cells * nu0` apart on the
/// circular Doppler axis. With `stopband`, Dopplers satisfy `|nu| > stopband`.
pub fn sample_scene(
    sec: &SceneSection,
    p: &RadarParams,
    stopband: Option<f64>,
    rng: &mut Rng,
) -> Result<Scene> {
    let (lo, hi) = sec.delay_range(p)?;
    if let Some(c) = stopband {
        if c >= p.max_doppler() {
            return Err(HarnessError::Config(format!(
                "cutoff {c} Hz leaves no passband below {} Hz",
                p.max_doppler()
            )));
        }
    }
    let tau_sep = sec.min_delay_sep_cells * p.tau0();
    let nu_sep = sec.min_doppler_sep_cells * p.nu0();
    let [dmin, dmax] = sec.dopplers_per_class;
    let mut budget = Budget(0);
    let mut taus: Vec<f64> = Vec::with_capacity(sec.k_tau);
    while taus.len() < sec.k_tau {
        let tau = rng.random_range(lo..hi);
        if taus.iter().all(|&o| (tau - o).abs() >= tau_sep) {
            taus.push(tau);
        } else {
            budget.reject()?;
        }
    }
    let counts: Vec<usize> = taus.iter().map(|_| rng.random_range(dmin..=dmax)).collect();
    'restart: loop {
        let mut nus: Vec<f64> = Vec::new();
        let mut targets = Vec::new();
        for (&tau, &count) in taus.iter().zip(&counts) {
            for _ in 0..count {
                let mut streak = 0;
                let nu = loop {
                    let nu = draw_doppler(p, rng, &mut budget)?;
                    let passes = stopband.is_none_or(|c| nu.abs() > c);
                    if passes && doppler_clear(nu, &nus, nu_sep, p) {
                        break nu;
                    }
                    budget.reject()?;
                    streak += 1;
                    if streak == RESTART_AFTER {
                        continue 'restart;
                    }
                };
                nus.push(nu);
                targets.push(Target {
                    tau,
                    nu,
                    alpha: draw_amplitude(sec, rng),
                });
            }
        }
        return Ok(Scene::from_targets(&targets));
    }
}

/// Two equal-amplitude principal targets at the given spacing plus a
/// decohering third target; `None` for a non-positive spacing.
///
/// In delay mode the third target shares the second target's delay with a
/// distinct Doppler; in Doppler mode it shares the second target's Doppler at
/// a distinct delay. Targets are returned principal first.
pub fn resolution_scene(
    axis: ResolutionAxis,
    spacing: f64,
    sec: &SceneSection,
    p: &RadarParams,
    rng: &mut Rng,
) -> Result<Option<Vec<Target>>> {
    if !(spacing > 0.0) {
        return Ok(None);
    }
    let (lo, hi) = sec.delay_range(p)?;
    let edge = p.max_doppler();
    let mut budget = Budget(0);
    let targets = match axis {
        ResolutionAxis::Ntd => {
            let gap = spacing * p.tau0();
            if lo + gap >= hi {
                return Err(HarnessError::Config(format!(
                    "NTD {spacing} does not fit the delay range"
                )));
            }
            let tau1 = rng.random_range(lo..hi - gap);
            let nu1 = draw_doppler(p, rng, &mut budget)?;
            let nu3 = loop {
                let nu = draw_doppler(p, rng, &mut budget)?;
                if doppler_clear(nu, &[nu1], sec.min_doppler_sep_cells * p.nu0(), p) {
                    break nu;
                }
                budget.reject()?;
            };
            vec![(tau1, nu1), (tau1 + gap, nu1), (tau1 + gap, nu3)]
        }
        ResolutionAxis::Ndd => {
            let gap = spacing * p.nu0();
            if gap >= 2.0 * edge {
                return Err(HarnessError::Config(format!(
                    "NDD {spacing} does not fit the Doppler band"
                )));
            }
            let tau1 = rng.random_range(lo..hi);
            let nu1 = loop {
                let nu = draw_doppler(p, rng, &mut budget)?;
                if nu + gap < edge {
                    break nu;
                }
                budget.reject()?;
            };
            let tau3 = loop {
                let tau = rng.random_range(lo..hi);
                if (tau - tau1).abs() >= sec.min_delay_sep_cells * p.tau0() {
                    break tau;
                }
                budget.reject()?;
            };
            vec![(tau1, nu1), (tau1, nu1 + gap), (tau3, nu1 + gap)]
        }
    };
    Ok(Some(
        targets
            .into_iter()
            .map(|(tau, nu)| Target {
                tau,
                nu,
                alpha: unit_amplitude(rng),
            })
            .collect(),
    ))
}

/// Scene from explicit target specs.
pub fn explicit_scene(sec: &SceneSection) -> Scene {
    let targets: Vec<Target> = sec
        .targets
        .iter()
        .map(|t| Target {
            tau: t.tau_s,
            nu: t.nu_hz,
            alpha: gesedd_core::c64(t.alpha_re, t.alpha_im),
        })
        .collect();
    Scene::from_targets(&targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gesedd_core::delay_est::theorem2_check;
    use gesedd_core::model::coeff_matrix;
    use gesedd_core::rng::rng_from_seed;

    fn p() -> RadarParams {
        RadarParams::compact()
    }

    #[test]
    fn random_scene_respects_separations() {
        let p = p();
        let sec = SceneSection {
            dopplers_per_class: [1, 2],
            k_tau: 5,
            ..SceneSection::default()
        };
        for seed in 0..50 {
            let scene = sample_scene(&sec, &p, None, &mut rng_from_seed(seed)).unwrap();
            scene.validate(&p).unwrap();
            assert_eq!(scene.k_tau(), 5);
            let d = scene.delays();
            for i in 0..d.len() {
                for j in 0..i {
                    assert!((d[i] - d[j]).abs() >= 2.0 * p.tau0());
                }
            }
            let t = scene.targets();
            for i in 0..t.len() {
                for j in 0..i {
                    assert!(circular_diff(t[i].nu, t[j].nu, 1.0 / p.pri()).abs() >= 2.0 * p.nu0());
                }
                let mag = t[i].alpha.norm();
                assert!((0.1..=1.0 + 1e-12).contains(&mag));
            }
        }
    }

    #[test]
    fn stopband_is_respected() {
        let p = p();
        let sec = SceneSection::default();
        let cutoff = 3.0 * p.nu0();
        let scene = sample_scene(&sec, &p, Some(cutoff), &mut rng_from_seed(3)).unwrap();
        assert!(scene.targets().iter().all(|t| t.nu.abs() > cutoff));
    }

    #[test]
    fn cutoff_beyond_band_is_config_error() {
        let p = p();
        let err = sample_scene(
            &SceneSection::default(),
            &p,
            Some(p.max_doppler()),
            &mut rng_from_seed(0),
        );
        assert!(matches!(err, Err(HarnessError::Config(_))));
    }

    #[test]
    fn infeasible_separation_is_config_error() {
        let p = p();
        let sec = SceneSection {
            k_tau: 40,
            min_doppler_sep_cells: 2.0,
            ..SceneSection::default()
        };
        let err = sample_scene(&sec, &p, None, &mut rng_from_seed(0));
        assert!(matches!(err, Err(HarnessError::Config(_))));
    }

    #[test]
    fn ntd_scene_layout_and_decoherence() {
        let p = p();
        let sec = SceneSection::default();
        for seed in 0..20 {
            let t = resolution_scene(ResolutionAxis::Ntd, 0.5, &sec, &p, &mut rng_from_seed(seed))
                .unwrap()
                .unwrap();
            assert!((t[1].tau - t[0].tau - 0.5 * p.tau0()).abs() < 1e-15);
            assert_eq!(t[0].nu, t[1].nu);
            assert_eq!(t[1].tau, t[2].tau);
            assert_ne!(t[2].nu, t[1].nu);
            let scene = Scene::from_targets(&t);
            assert!(theorem2_check(&coeff_matrix(&scene, &p)).unwrap().full_rank);
        }
    }

    #[test]
    fn ndd_scene_layout() {
        let p = p();
        let t = resolution_scene(
            ResolutionAxis::Ndd,
            1.5,
            &SceneSection::default(),
            &p,
            &mut rng_from_seed(1),
        )
        .unwrap()
        .unwrap();
        assert_eq!(t[0].tau, t[1].tau);
        assert!((t[1].nu - t[0].nu - 1.5 * p.nu0()).abs() < 1e-9);
        assert_eq!(t[2].nu, t[1].nu);
        Scene::from_targets(&t).validate(&p).unwrap();
    }

    #[test]
    fn zero_spacing_is_skipped() {
        let p = p();
        let r = resolution_scene(
            ResolutionAxis::Ndd,
            0.0,
            &SceneSection::default(),
            &p,
            &mut rng_from_seed(0),
        );
        assert!(r.unwrap().is_none());
    }
}
