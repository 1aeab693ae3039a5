use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Named, ordered collection of learnable tensors. Registration order is
/// the order used by checkpoints and optimizers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies values from `other`, which must have identical names and shapes.
    pub fn copy_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(TensorError::Config(format!(
                "parameter count mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "copy_from",
                    lhs: dst.value.shape().to_vec(),
                    rhs: src.value.shape().to_vec(),
                });
            }
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamStore`]. Backward passes add into
/// these; they are only cleared by [`GradStore::zero`].
#[derive(Clone, Debug)]
pub struct GradStore<T> {
    grads: Vec<Vec<T>>,
    populated: bool,
}

impl<T: Element> GradStore<T> {
    pub fn for_params(params: &ParamStore<T>) -> Self {
        Self {
            grads: params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
            populated: false,
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, grad: &[T]) {
        for (g, &d) in self.grads[id.0].iter_mut().zip(grad) {
            *g += d;
        }
        self.populated = true;
    }

    /// True once any backward pass has written into the store since the
    /// last [`GradStore::zero`].
    pub fn is_populated(&self) -> bool {
        self.populated
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        self.populated = false;
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| {
                let x = v.as_f64();
                x * x
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.grads.iter().map(|g| g.as_slice())
    }
}
