//! Fields, test functions and configurations shared by the checks.

use rand::Rng;

use crate::cone::{DiscreteMeasure, Theta};
use crate::functionals::{CylinderFunction, MarkFunction, MassProfile, Outer};
use crate::intensity::IntensityModel;
use crate::space::{BumpField, ComponentBump, FourierField, ScalarField, TorusSpace, VectorField};

pub fn unit_square() -> TorusSpace {
    TorusSpace::unit_square()
}

pub fn slp() -> IntensityModel {
    IntensityModel::smoothed_log_power(1.0).expect("alpha = 1 is admissible")
}

pub fn bump(center: [f64; 2], radius: f64, amplitude: f64) -> ScalarField {
    ScalarField::Bump(BumpField::new(&center, radius, amplitude))
}

pub fn fourier(k: [i32; 2], phase: f64, amplitude: f64) -> ScalarField {
    ScalarField::Fourier(FourierField::new(&k, phase, amplitude))
}

/// `θ = e^h` with `h` a bump of the given height centred in the square.
pub fn theta_bump(amplitude: f64) -> Theta {
    Theta::exp_of(bump([0.5, 0.5], 0.35, amplitude))
}

/// A bounded level-10 function: `|F| < 1`.
pub fn level_function() -> CylinderFunction {
    CylinderFunction::new(
        Outer::TanhAffine {
            constant: 0.1,
            coeffs: vec![0.8, -0.5],
        },
        vec![
            MarkFunction::new(MassProfile::Bump { lo: 0.1, hi: 5.0 }, bump([0.5, 0.5], 0.4, 1.0)),
            MarkFunction::new(
                MassProfile::Plateau {
                    lo: 0.2,
                    hi: 10.0,
                    ramp: 0.5,
                },
                fourier([1, 1], 0.0, 1.0),
            ),
        ],
        10,
    )
    .expect("valid fixture")
}

pub fn partner_function() -> CylinderFunction {
    CylinderFunction::new(
        Outer::Quadratic {
            constant: 0.3,
            linear: vec![0.5, -0.4],
            diagonal: vec![0.2, 0.1],
        },
        vec![
            MarkFunction::new(
                MassProfile::Plateau {
                    lo: 0.15,
                    hi: 6.0,
                    ramp: 0.6,
                },
                bump([0.3, 0.6], 0.35, 1.2),
            ),
            MarkFunction::new(MassProfile::Bump { lo: 0.3, hi: 8.0 }, fourier([0, 1], 0.4, 1.0)),
        ],
        10,
    )
    .expect("valid fixture")
}

pub fn linear_function() -> CylinderFunction {
    CylinderFunction::new(
        Outer::Affine {
            constant: 0.0,
            coeffs: vec![1.0],
        },
        vec![MarkFunction::new(
            MassProfile::Plateau {
                lo: 0.1,
                hi: 8.0,
                ramp: 0.7,
            },
            bump([0.45, 0.55], 0.4, 1.0),
        )],
        10,
    )
    .expect("valid fixture")
}

pub fn quadratic_function() -> CylinderFunction {
    CylinderFunction::new(
        Outer::Product { i: 0, j: 1, scale: 1.0 },
        vec![
            MarkFunction::new(MassProfile::Bump { lo: 0.1, hi: 6.0 }, fourier([1, 0], 0.2, 1.0)),
            MarkFunction::new(
                MassProfile::Plateau {
                    lo: 0.12,
                    hi: 9.0,
                    ramp: 0.5,
                },
                bump([0.6, 0.4], 0.4, 1.0),
            ),
        ],
        10,
    )
    .expect("valid fixture")
}

/// A compressible field built from two coordinate bumps.
pub fn flow_field() -> VectorField {
    VectorField::Components {
        components: vec![
            ComponentBump {
                axis: 0,
                bump: BumpField::new(&[0.4, 0.5], 0.3, 0.8),
            },
            ComponentBump {
                axis: 1,
                bump: BumpField::new(&[0.6, 0.4], 0.3, 0.5),
            },
        ],
    }
}

/// A divergence-free field.
pub fn vortex() -> VectorField {
    VectorField::Curl {
        plane: [0, 1],
        stream: BumpField::new(&[0.5, 0.5], 0.3, 0.5),
    }
}

/// One configuration `(F, G, v, h)` of the integration-by-parts identity.
#[derive(Clone, Debug)]
pub struct IbpCase {
    pub label: &'static str,
    pub model: IntensityModel,
    pub f: CylinderFunction,
    pub g: CylinderFunction,
    pub v: VectorField,
    pub h: ScalarField,
}

pub fn ibp_cases() -> Vec<IbpCase> {
    vec![
        IbpCase {
            label: "gamma/compressible+bump",
            model: IntensityModel::gamma(),
            f: level_function(),
            g: partner_function(),
            v: flow_field(),
            h: bump([0.5, 0.5], 0.4, 0.9),
        },
        IbpCase {
            label: "gamma/vortex only",
            model: IntensityModel::gamma(),
            f: linear_function(),
            g: quadratic_function(),
            v: vortex(),
            h: ScalarField::Zero,
        },
        IbpCase {
            label: "slp/mass only",
            model: slp(),
            f: level_function(),
            g: linear_function(),
            v: VectorField::Zero,
            h: bump([0.4, 0.4], 0.45, 1.0),
        },
        IbpCase {
            label: "slp/compressible+fourier",
            model: slp(),
            f: partner_function(),
            g: quadratic_function(),
            v: flow_field(),
            h: fourier([1, 0], 0.3, 0.7),
        },
        IbpCase {
            label: "gamma/compressible+fourier",
            model: IntensityModel::gamma(),
            f: quadratic_function(),
            g: level_function(),
            v: flow_field(),
            h: fourier([0, 1], 0.1, 0.8),
        },
    ]
}

/// A random level-10 cylinder function with one to three marks.
pub fn random_cylinder<R: Rng + ?Sized>(rng: &mut R) -> CylinderFunction {
    let n = rng.random_range(1..=3usize);
    let marks: Vec<MarkFunction> = (0..n)
        .map(|k| {
            let lo = 0.1 * (1.0 + rng.random::<f64>());
            let hi = lo * (5.0 + 20.0 * rng.random::<f64>());
            let chi = if k % 2 == 0 {
                MassProfile::Bump { lo, hi }
            } else {
                MassProfile::Plateau {
                    lo,
                    hi,
                    ramp: 0.3 * (hi / lo).ln(),
                }
            };
            let u = if rng.random::<bool>() {
                bump(
                    [rng.random(), rng.random()],
                    0.2 + 0.25 * rng.random::<f64>(),
                    2.0 * rng.random::<f64>() - 1.0,
                )
            } else {
                fourier([rng.random_range(-2..=2), rng.random_range(-2..=2)], rng.random(), 1.0)
            };
            MarkFunction::new(chi, u)
        })
        .collect();
    let coeffs: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let outer = match rng.random_range(0..4) {
        0 => Outer::Affine { constant: 0.2, coeffs },
        1 => Outer::Quadratic {
            constant: 0.0,
            linear: coeffs.clone(),
            diagonal: coeffs.iter().map(|c| 0.5 * c).collect(),
        },
        2 => Outer::Product {
            i: 0,
            j: n - 1,
            scale: 1.3,
        },
        _ => Outer::TanhAffine { constant: 0.1, coeffs },
    };
    CylinderFunction::new(outer, marks, 10).expect("random fixture is valid")
}

/// One to six atoms with log-masses uniform on `[-2, 2]`, so most of them
/// fall inside the supports of [`random_cylinder`].
pub fn random_configuration<R: Rng + ?Sized>(rng: &mut R) -> DiscreteMeasure {
    let n = rng.random_range(1..=6usize);
    let mut eta = DiscreteMeasure::empty(1e-3);
    for _ in 0..n {
        let s = (rng.random::<f64>() * 4.0 - 2.0).exp();
        eta = eta.with_atom(s, [rng.random(), rng.random(), 0.0, 0.0]);
    }
    eta
}

/// A linear observable `Σ sᵖ φ(s, x)` over the atoms.
#[derive(Clone, Debug)]
pub struct PanelObservable {
    pub label: &'static str,
    pub mark: MarkFunction,
    pub mass_power: i32,
}

impl PanelObservable {
    pub fn evaluate(&self, space: &TorusSpace, eta: &DiscreteMeasure) -> f64 {
        eta.marked_pairing(|s, x| s.powi(self.mass_power) * self.mark.value(space, s, x))
    }
}

/// Observables supported on masses `≥ 10⁻²`. The mass-weighted ones see the
/// large atoms, where the mass drift is strongest.
pub fn stationarity_panel() -> Vec<PanelObservable> {
    vec![
        PanelObservable {
            label: "plateau mass",
            mark: MarkFunction::new(
                MassProfile::Plateau {
                    lo: 0.02,
                    hi: 50.0,
                    ramp: 0.8,
                },
                ScalarField::Constant { value: 1.0 },
            ),
            mass_power: 1,
        },
        PanelObservable {
            label: "bump x fourier",
            mark: MarkFunction::new(MassProfile::Bump { lo: 0.05, hi: 5.0 }, fourier([1, 0], 0.0, 1.0)),
            mass_power: 0,
        },
        PanelObservable {
            label: "plateau x bump",
            mark: MarkFunction::new(
                MassProfile::Plateau {
                    lo: 0.1,
                    hi: 20.0,
                    ramp: 0.5,
                },
                bump([0.5, 0.5], 0.35, 1.0),
            ),
            mass_power: 1,
        },
    ]
}

/// Starting configuration for the first-chaos check: masses across the
/// observable's support and its ramps.
pub fn intertwining_start() -> DiscreteMeasure {
    let atoms = [
        (0.6, [0.1, 0.2]),
        (1.3, [0.35, 0.8]),
        (2.5, [0.5, 0.5]),
        (4.0, [0.7, 0.3]),
        (7.0, [0.9, 0.65]),
    ];
    atoms.iter().fold(DiscreteMeasure::empty(1e-3), |eta, (s, x)| {
        eta.with_atom(*s, [x[0], x[1], 0.0, 0.0])
    })
}

pub fn intertwining_observable() -> MarkFunction {
    MarkFunction::new(
        MassProfile::Plateau {
            lo: 1.0,
            hi: 8.0,
            ramp: 0.5,
        },
        fourier([1, 0], 0.0, 1.0),
    )
}
