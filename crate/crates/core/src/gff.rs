//! Discrete Gaussian free field with Dirichlet boundary, renormalized squares
//! and closed-form Laplace transforms of squared fields.
//!
//! The field has precision `−Δ` (unit conductances), so its covariance is the
//! Green operator `G` of [`lattice::green`](crate::lattice::green) and its
//! density is proportional to `exp(−½·Σ_{edges}(h(x) − h(y))²)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{green, harmonic_extension, log_det_killed, DomainGraph, ScalarField, Support};
use crate::rng::{RngKey, StreamRng};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GffSample {
    pub field: ScalarField,
    pub boundary_condition: ScalarField,
    pub rng: Option<RngKey>,
}

impl GffSample {
    /// The centered part `h − harmonic_extension(bc)` on the interior.
    pub fn centered(&self, mean: &ScalarField) -> ScalarField {
        self.field.combine(1.0, mean, -1.0)
    }
}

/// Reusable sampler: one Cholesky factorization of the precision matrix,
/// then one triangular solve per draw.
#[derive(Debug, Clone)]
pub struct GffSampler {
    upper: DMatrix<f64>,
    interior: Vec<usize>,
    mean: ScalarField,
    boundary_condition: ScalarField,
}

impl GffSampler {
    pub fn new(domain: &DomainGraph, boundary_condition: &ScalarField) -> Result<Self> {
        let mean = harmonic_extension(domain, boundary_condition)?;
        let upper = match nalgebra::Cholesky::new(domain.laplacian()) {
            Some(c) => c.l().transpose(),
            None if domain.n_interior() == 0 => DMatrix::zeros(0, 0),
            None => return Err(Error::Singular("Dirichlet Laplacian is singular".into())),
        };
        let bc = ScalarField::from_fn(domain, Support::All, |v| {
            if domain.is_interior(v) {
                0.0
            } else {
                boundary_condition.get(v)
            }
        });
        Ok(GffSampler {
            upper,
            interior: domain.interior().to_vec(),
            mean,
            boundary_condition: bc,
        })
    }

    /// Harmonic extension of the boundary condition: the field's mean.
    pub fn mean(&self) -> &ScalarField {
        &self.mean
    }

    /// Centered interior vector with covariance `G`, in interior order.
    pub fn sample_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let n = self.interior.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // U = Lᵀ with L Lᵀ = −Δ, so U⁻¹z has covariance (−Δ)⁻¹.
        self.upper
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GffSample {
        let centered = self.sample_centered(rng);
        let mut field = self.mean.clone();
        for (i, &v) in self.interior.iter().enumerate() {
            field.add_at(v, centered[i]);
        }
        GffSample {
            field,
            boundary_condition: self.boundary_condition.clone(),
            rng: None,
        }
    }
}

/// One GFF draw with the given boundary condition.
///
/// Building a [`GffSampler`] once is much cheaper for repeated draws.
pub fn sample_gff(domain: &DomainGraph, boundary_condition: &ScalarField, rng: &mut StreamRng) -> Result<GffSample> {
    let key = rng.key();
    let mut s = GffSampler::new(domain, boundary_condition)?.sample(rng);
    s.rng = Some(key);
    Ok(s)
}

/// `[[(h + Φ)²]](x) = (h(x) + Φ(x))² − G(x, x)` on interior vertices.
///
/// `sample` must have a zero boundary condition; boundary data belong in
/// `shift`.
pub fn renormalized_square(domain: &DomainGraph, sample: &GffSample, shift: &ScalarField) -> Result<ScalarField> {
    domain.check_field(shift)?;
    let g = domain.green0()?;
    Ok(ScalarField::from_fn(domain, Support::Interior, |v| {
        let y = sample.field.get(v) + shift.get(v);
        y * y - g.at(v, v)
    }))
}

/// `Σ_x k(x)·[[(h + Φ)²]](x)` for a centered interior vector `h` (interior
/// order); the shift `Φ` is optional.
pub fn renormalized_square_functional(
    domain: &DomainGraph,
    centered: &DVector<f64>,
    shift: Option<&ScalarField>,
    k: &ScalarField,
) -> Result<f64> {
    let g = domain.green0()?;
    Ok(domain
        .interior()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let y = centered[i] + shift.map_or(0.0, |s| s.get(v));
            k.get(v) * (y * y - g.at(v, v))
        })
        .sum())
}

/// `log E[exp(−½[[h²]](k))] = −½ log det(I + GK) + ½ tr(GK)`.
pub fn log_laplace_centered_square(domain: &DomainGraph, k: &ScalarField) -> Result<f64> {
    if domain.n_interior() == 0 {
        return Ok(0.0);
    }
    let zero = ScalarField::zeros(domain, Support::Interior);
    let log_det = log_det_killed(domain, k)? - log_det_killed(domain, &zero)?;
    let g = domain.green0()?;
    let trace: f64 = domain.interior().iter().map(|&v| g.at(v, v) * k.get(v)).sum();
    Ok(-0.5 * log_det + 0.5 * trace)
}

/// `E[exp(−½[[h²]](k))]` for the zero-boundary field, exactly.
pub fn laplace_centered_square(domain: &DomainGraph, k: &ScalarField) -> Result<f64> {
    Ok(log_laplace_centered_square(domain, k)?.exp())
}

/// `log E[exp(−½[[(h + Φ)²]](k))]`.
pub fn log_laplace_shifted_square(domain: &DomainGraph, k: &ScalarField, shift: &ScalarField) -> Result<f64> {
    domain.check_field(shift)?;
    let centered = log_laplace_centered_square(domain, k)?;
    if domain.n_interior() == 0 {
        return Ok(0.0);
    }
    let gk = green(domain, k)?;
    let kphi = DVector::from_iterator(
        domain.n_interior(),
        domain.interior().iter().map(|&v| k.get(v) * shift.get(v)),
    );
    let phi2k: f64 = domain
        .interior()
        .iter()
        .map(|&v| shift.get(v) * shift.get(v) * k.get(v))
        .sum();
    let quad = kphi.dot(&(gk.matrix() * &kphi));
    Ok(-0.5 * phi2k + centered + 0.5 * quad)
}

/// `E[exp(−½[[(h + Φ)²]](k))]` for the zero-boundary field `h` and a
/// deterministic shift `Φ`, exactly.
pub fn laplace_shifted_square(domain: &DomainGraph, k: &ScalarField, shift: &ScalarField) -> Result<f64> {
    Ok(log_laplace_shifted_square(domain, k, shift)?.exp())
}
