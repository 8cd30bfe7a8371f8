use std::collections::VecDeque;

use mcmi_tensor::Tensor;
use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, McmiError, Result};
use crate::image::{Geometry, ImageBatch};

/// FIFO buffers of recent real and generated images of one domain.
///
/// Capacity is split evenly between the two buffers; sampling draws half
/// from each when possible and never repeats an item within one draw.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorPool {
    geometry: Geometry,
    capacity: usize,
    real: VecDeque<Vec<f32>>,
    generated: VecDeque<Vec<f32>>,
}

impl AnchorPool {
    pub fn new(geometry: Geometry, capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(invalid("anchor pool capacity must be at least 2"));
        }
        Ok(Self {
            geometry,
            capacity,
            real: VecDeque::new(),
            generated: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.real.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn real_len(&self) -> usize {
        self.real.len()
    }

    pub fn generated_len(&self) -> usize {
        self.generated.len()
    }

    fn ring_capacity(&self) -> usize {
        self.capacity / 2
    }

    fn push_into(&self, ring: &mut VecDeque<Vec<f32>>, batch: &ImageBatch) -> Result<()> {
        self.geometry.check(batch.tensor())?;
        let signed = batch.to_signed();
        for item in signed.tensor().data().chunks(self.geometry.pixels()) {
            if ring.len() == self.ring_capacity() {
                ring.pop_front();
            }
            ring.push_back(item.to_vec());
        }
        Ok(())
    }

    pub fn push_real(&mut self, batch: &ImageBatch) -> Result<()> {
        let mut ring = std::mem::take(&mut self.real);
        let out = self.push_into(&mut ring, batch);
        self.real = ring;
        out
    }

    pub fn push_generated(&mut self, batch: &ImageBatch) -> Result<()> {
        let mut ring = std::mem::take(&mut self.generated);
        let out = self.push_into(&mut ring, batch);
        self.generated = ring;
        out
    }

    /// `n` distinct items, half generated when available, real first.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<ImageBatch> {
        if n > self.len() {
            return Err(McmiError::InsufficientAnchors {
                need: n,
                have: self.len(),
            });
        }
        let mut n_gen = (n / 2).min(self.generated.len());
        let n_real = (n - n_gen).min(self.real.len());
        n_gen = n - n_real;
        let mut data = Vec::with_capacity(n * self.geometry.pixels());
        for i in index::sample(rng, self.real.len(), n_real) {
            data.extend_from_slice(&self.real[i]);
        }
        for i in index::sample(rng, self.generated.len(), n_gen) {
            data.extend_from_slice(&self.generated[i]);
        }
        let g = self.geometry;
        ImageBatch::signed(Tensor::from_vec(&[n, g.channels, g.height, g.width], data)?)
    }

    /// Both buffers as `[n, c, h, w]` tensors.
    pub fn to_tensors(&self) -> (Tensor<f32>, Tensor<f32>) {
        let g = self.geometry;
        let pack = |ring: &VecDeque<Vec<f32>>| {
            let data: Vec<f32> = ring.iter().flatten().copied().collect();
            Tensor::from_vec(&[ring.len(), g.channels, g.height, g.width], data).expect("consistent pool")
        };
        (pack(&self.real), pack(&self.generated))
    }

    /// Inverse of [`AnchorPool::to_tensors`].
    pub fn from_tensors(
        geometry: Geometry,
        capacity: usize,
        real: &Tensor<f32>,
        generated: &Tensor<f32>,
    ) -> Result<Self> {
        let mut pool = Self::new(geometry, capacity)?;
        for (t, ring) in [(real, &mut pool.real), (generated, &mut pool.generated)] {
            let (n, ..) = t.dims4("anchor pool")?;
            if t.shape()[1..] != [geometry.channels, geometry.height, geometry.width] || n > capacity / 2 {
                return Err(invalid("stored anchor pool does not match the configured geometry"));
            }
            ring.extend(t.data().chunks(geometry.pixels()).map(<[f32]>::to_vec));
        }
        Ok(pool)
    }
}

/// Paired sample sets for one score matrix.
#[derive(Clone, Debug)]
pub struct MiBatch {
    pub x: ImageBatch,
    pub y: ImageBatch,
    /// Rows `0..live` are positive pairs; the rest are anchors.
    pub live: usize,
}

/// Pads the live pairs `(x_i, y_i)` to `k` rows with pool anchors drawn from
/// `x_pool` and `y_pool`.
pub fn assemble_mi_batch<R: Rng + ?Sized>(
    x: &ImageBatch,
    y: &ImageBatch,
    x_pool: &AnchorPool,
    y_pool: &AnchorPool,
    k: usize,
    rng: &mut R,
) -> Result<MiBatch> {
    let live = x.len();
    if y.len() != live || live == 0 {
        return Err(invalid(format!(
            "live sets must be equal and non-empty, got {live} and {}",
            y.len()
        )));
    }
    if live > k {
        return Err(invalid(format!("live batch {live} exceeds K = {k}")));
    }
    if live == k {
        return Ok(MiBatch {
            x: x.to_signed(),
            y: y.to_signed(),
            live,
        });
    }
    let ax = x_pool.sample(k - live, rng)?;
    let ay = y_pool.sample(k - live, rng)?;
    Ok(MiBatch {
        x: ImageBatch::concat(&[&x.to_signed(), &ax])?,
        y: ImageBatch::concat(&[&y.to_signed(), &ay])?,
        live,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const G: Geometry = Geometry::new(1, 2, 2);

    fn batch(vals: &[f32]) -> ImageBatch {
        let data: Vec<f32> = vals.iter().flat_map(|&v| [v; 4]).collect();
        ImageBatch::signed(Tensor::from_vec(&[vals.len(), 1, 2, 2], data).unwrap()).unwrap()
    }

    fn firsts(b: &ImageBatch) -> Vec<f32> {
        b.tensor().data().chunks(4).map(|c| c[0]).collect()
    }

    #[test]
    fn fifo_eviction() {
        let mut p = AnchorPool::new(G, 6).unwrap();
        p.push_real(&batch(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        assert_eq!(p.real_len(), 3);
        let (real, _) = p.to_tensors();
        assert_eq!(real.data().chunks(4).map(|c| c[0]).collect::<Vec<_>>(), [0.2, 0.3, 0.4]);
    }

    #[test]
    fn half_and_half_without_replacement() {
        let mut p = AnchorPool::new(G, 16).unwrap();
        p.push_real(&batch(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        p.push_generated(&batch(&[-0.1, -0.2, -0.3, -0.4])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = firsts(&p.sample(6, &mut rng).unwrap());
        assert_eq!(s.iter().filter(|v| **v > 0.0).count(), 3);
        let mut sorted = s.clone();
        sorted.sort_by(f32::total_cmp);
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn falls_back_to_real_when_no_generated() {
        let mut p = AnchorPool::new(G, 16).unwrap();
        p.push_real(&batch(&[0.1, 0.2, 0.3])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(p.sample(3, &mut rng).unwrap().len(), 3);
        assert!(matches!(
            p.sample(4, &mut rng),
            Err(McmiError::InsufficientAnchors { need: 4, have: 3 })
        ));
    }

    #[test]
    fn mi_batch_pads_with_anchors() {
        let mut p = AnchorPool::new(G, 16).unwrap();
        p.push_real(&batch(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let live = batch(&[-0.7, -0.8]);
        let mb = assemble_mi_batch(&live, &live, &p, &p, 8, &mut rng).unwrap();
        assert_eq!((mb.x.len(), mb.y.len(), mb.live), (8, 8, 2));
        assert_eq!(firsts(&mb.x)[..2], [-0.7, -0.8]);
        let full = assemble_mi_batch(&live, &live, &p, &p, 2, &mut rng).unwrap();
        assert_eq!(full.x.len(), 2);
        assert!(matches!(
            assemble_mi_batch(&live, &live, &p, &p, 9, &mut rng),
            Err(McmiError::InsufficientAnchors { need: 7, have: 6 })
        ));
    }

    #[test]
    fn tensor_round_trip() {
        let mut p = AnchorPool::new(G, 8).unwrap();
        p.push_real(&batch(&[0.5])).unwrap();
        p.push_generated(&batch(&[0.25, -0.5])).unwrap();
        let (r, g) = p.to_tensors();
        assert_eq!(AnchorPool::from_tensors(G, 8, &r, &g).unwrap(), p);
    }
}
