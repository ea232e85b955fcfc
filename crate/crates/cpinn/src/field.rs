//! Space-time scalar fields with evaluable derivatives.
//!
//! Losses and error studies are written against this trait so that a
//! trained network, a manufactured solution, a bump fixture, or a
//! perturbed combination of them can be plugged in interchangeably.

use crate::network::Jet;

/// A scalar field `v(x, t)` on the space-time box with first and second
/// derivatives available at every point.
pub trait Field {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], t: f64) -> f64;

    /// Value, spatial gradient, time derivative, spatial Hessian, Laplacian.
    fn jet(&self, x: &[f64], t: f64) -> Jet;
}

/// `base + scale * part` linear combination of two fields.
pub struct Perturbed<'a, A: ?Sized, B: ?Sized> {
    pub base: &'a A,
    pub part: &'a B,
    pub scale: f64,
}

impl<'a, A, B> Perturbed<'a, A, B>
where
    A: Field + ?Sized,
    B: Field + ?Sized,
{
    pub fn new(base: &'a A, part: &'a B, scale: f64) -> Self {
        assert_eq!(base.dim(), part.dim());
        Perturbed { base, part, scale }
    }
}

impl<A: Field + ?Sized, B: Field + ?Sized> Field for Perturbed<'_, A, B> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.base.value(x, t) + self.scale * self.part.value(x, t)
    }

    fn jet(&self, x: &[f64], t: f64) -> Jet {
        let mut j = self.base.jet(x, t);
        let p = self.part.jet(x, t);
        j.value += self.scale * p.value;
        j.dt += self.scale * p.dt;
        for (a, b) in j.grad_x.iter_mut().zip(&p.grad_x) {
            *a += self.scale * b;
        }
        for (a, b) in j.hess_x.iter_mut().zip(&p.hess_x) {
            *a += self.scale * b;
        }
        j.laplacian += self.scale * p.laplacian;
        j
    }
}

/// The zero field in `d` spatial dimensions.
pub struct ZeroField(pub usize);

impl Field for ZeroField {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _x: &[f64], _t: f64) -> f64 {
        0.0
    }

    fn jet(&self, _x: &[f64], _t: f64) -> Jet {
        Jet::zero(self.0)
    }
}
