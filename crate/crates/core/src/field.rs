use crate::gsr::GsrField;
use crate::linalg::{Mat3, Vec3};

/// A velocity field with a closed-form Jacobian.
///
/// `jacobian(x)[k][l] = ∂u_l/∂x_k`, matching [`GsrField::gradient`].
pub trait VelocityField: Sync {
    fn dim(&self) -> usize;
    fn velocity(&self, x: &Vec3) -> Vec3;
    fn jacobian(&self, x: &Vec3) -> Mat3;
}

impl VelocityField for GsrField {
    fn dim(&self) -> usize {
        GsrField::dim(self)
    }

    fn velocity(&self, x: &Vec3) -> Vec3 {
        self.evaluate(x)
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        self.gradient(x)
    }
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn velocity(&self, x: &Vec3) -> Vec3 {
        (**self).velocity(x)
    }

    fn jacobian(&self, x: &Vec3) -> Mat3 {
        (**self).jacobian(x)
    }
}

/// Spatially constant field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantField {
    pub dim: usize,
    pub value: Vec3,
}

impl VelocityField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, _x: &Vec3) -> Vec3 {
        self.value
    }

    fn jacobian(&self, _x: &Vec3) -> Mat3 {
        [[0.0; 3]; 3]
    }
}

/// Linear field `u(x) = A x`, stored as the Jacobian `J = Aᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearField {
    pub dim: usize,
    /// `a[l][k]`: row `l` gives component `u_l`.
    pub a: Mat3,
}

impl VelocityField for LinearField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &Vec3) -> Vec3 {
        crate::linalg::mat_vec(&self.a, x)
    }

    fn jacobian(&self, _x: &Vec3) -> Mat3 {
        crate::linalg::transpose(&self.a)
    }
}
