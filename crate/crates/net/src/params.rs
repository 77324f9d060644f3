use crate::mat::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub value: Mat,
}

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.tensors.push(Tensor {
            name: name.into(),
            value,
        });
        self.tensors.len() - 1
    }

    pub fn get(&self, i: usize) -> &Mat {
        &self.tensors[i].value
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Mat {
        &mut self.tensors[i].value
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.tensors.iter().map(|t| Mat::zeros(t.value.rows, t.value.cols)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.is_finite())
    }

    /// Rounds every value to the nearest f32 (the checkpoint precision).
    pub fn round_f32(&mut self) {
        for t in &mut self.tensors {
            t.value.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}
