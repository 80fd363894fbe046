//! Numeric reference for spatially decoupled cross-attention.
//!
//! A hidden feature map is split into positive and negative channel halves,
//! each replicated once per guidance view. Every replicated channel group
//! attends only to the tokens of its own view, and the final map takes, inside
//! the image region of view i, the two groups that belong to view i.

use image::{GrayImage, Luma};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("matrix {rows}x{cols} needs {} values, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix values must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn random<R: Rng>(rows: usize, cols: usize, scale: T, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| T::lit(rng.gen_range(-1.0..=1.0)) * scale).collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// `v · self` for a row vector `v` of length `rows`.
    pub fn left_mul(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += vi * m;
            }
        }
        out
    }
}

/// Channel-major `C × W × H` feature map: value (c, x, y) at `(c·H + y)·W + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor<T> {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureTensor<T> {
    pub fn new(channels: usize, width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || width == 0 || height == 0 {
            return Err(Error::invalid("feature dimensions must be positive"));
        }
        if data.len() != channels * width * height {
            return Err(Error::invalid(format!(
                "feature tensor {channels}x{width}x{height} needs {} values, got {}",
                channels * width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(Self { channels, width, height, data })
    }

    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self { channels, width, height, data: vec![T::zero(); channels * width * height] }
    }

    pub fn random<R: Rng>(channels: usize, width: usize, height: usize, rng: &mut R) -> Self {
        let data = (0..channels * width * height).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
        Self { channels, width, height, data }
    }

    pub fn plane(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, c: usize, x: usize, y: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> T {
        self.data[self.index(c, x, y)]
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.plane()..(c + 1) * self.plane()]
    }

    /// Values of channels `c0..c0 + len` at pixel `p` (row-major index).
    pub fn token(&self, c0: usize, len: usize, p: usize) -> Vec<T> {
        (c0..c0 + len).map(|c| self.data[c * self.plane() + p]).collect()
    }

    /// Channel `c` as an 8-bit image, min-max normalized.
    pub fn channel_image(&self, c: usize) -> GrayImage {
        normalized_image(self.channel(c), self.width, self.height)
    }
}

/// Min-max normalizes `values` (row-major, `width × height`) to 0..=255.
pub fn normalized_image<T: Real>(values: &[T], width: usize, height: usize) -> GrayImage {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    GrayImage::from_fn(width as u32, height as u32, |x, y| {
        let v = values[y as usize * width + x as usize];
        let t = if span > T::zero() { ((v - lo) / span).to_f64_lossy() } else { 0.0 };
        Luma([(t * 255.0).round() as u8])
    })
}

/// Positive and negative guidance tokens of one view, each `F × C/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceView<T> {
    pub positive: Matrix<T>,
    pub negative: Matrix<T>,
}

impl<T: Real> GuidanceView<T> {
    pub fn random<R: Rng>(tokens: usize, dim: usize, rng: &mut R) -> Self {
        Self { positive: Matrix::random(tokens, dim, T::one(), rng), negative: Matrix::random(tokens, dim, T::one(), rng) }
    }
}

/// Combined guidance `[g¹_f … gᴺ_f | g¹_b … gᴺ_b]`, `CN × F`, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceTensor<T> {
    pub channels: usize,
    pub tokens: usize,
    pub data: Vec<T>,
}

impl<T: Real> GuidanceTensor<T> {
    /// Token `t` of channels `c0..c0 + len`.
    pub fn token(&self, c0: usize, len: usize, t: usize) -> Vec<T> {
        (c0..c0 + len).map(|c| self.data[c * self.tokens + t]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// One rectangle per view, tiling the canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionLayout {
    pub width: usize,
    pub height: usize,
    pub rects: Vec<Rect>,
}

impl RegionLayout {
    /// Two rows (one when `n = 1`): the top row holds ⌈n/2⌉ views, the
    /// bottom row the rest, each row split evenly in width.
    pub fn grid(n: usize, width: usize, height: usize) -> Result<Self> {
        let rows = n.min(2);
        if n == 0 || height < rows || width < n.div_ceil(2) {
            return Err(Error::invalid(format!("cannot lay out {n} views on {width}x{height}")));
        }
        let mut rects = Vec::with_capacity(n);
        let per_row = [n.div_ceil(2), n / 2];
        for r in 0..rows {
            let (y0, y1) = (height * r / rows, height * (r + 1) / rows);
            let cols = if rows == 1 { n } else { per_row[r] };
            for c in 0..cols {
                let (x0, x1) = (width * c / cols, width * (c + 1) / cols);
                rects.push(Rect { x: x0, y: y0, width: x1 - x0, height: y1 - y0 });
            }
        }
        let layout = Self { width, height, rects };
        layout.validate()?;
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    /// Region of each pixel, checking that every pixel is covered exactly once.
    pub fn owners(&self) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; self.width * self.height];
        for (i, r) in self.rects.iter().enumerate() {
            if r.x + r.width > self.width || r.y + r.height > self.height {
                return Err(Error::invalid(format!("region {i} leaves the canvas")));
            }
            for y in r.y..r.y + r.height {
                for x in r.x..r.x + r.width {
                    let o = &mut owner[y * self.width + x];
                    if *o != usize::MAX {
                        return Err(Error::invalid(format!("regions {} and {i} overlap", *o)));
                    }
                    *o = i;
                }
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(Error::invalid("regions do not cover the canvas"));
        }
        Ok(owner)
    }

    pub fn validate(&self) -> Result<()> {
        self.owners().map(|_| ())
    }
}

/// Query, key and value projections, each `C/2 × C/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights<T> {
    pub query: Matrix<T>,
    pub key: Matrix<T>,
    pub value: Matrix<T>,
}

impl<T: Real> AttentionWeights<T> {
    pub fn new(query: Matrix<T>, key: Matrix<T>, value: Matrix<T>) -> Result<Self> {
        let d = query.rows;
        for (name, m) in [("query", &query), ("key", &key), ("value", &value)] {
            if m.rows != d || m.cols != d {
                return Err(Error::invalid(format!("{name} projection must be {d}x{d}, got {}x{}", m.rows, m.cols)));
            }
        }
        Ok(Self { query, key, value })
    }

    pub fn identity(dim: usize) -> Self {
        Self { query: Matrix::identity(dim), key: Matrix::identity(dim), value: Matrix::identity(dim) }
    }

    /// Uniform entries in ±1/√dim.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s = T::one() / T::from_usize_lossy(dim).sqrt();
        Self {
            query: Matrix::random(dim, dim, s, &mut rng),
            key: Matrix::random(dim, dim, s, &mut rng),
            value: Matrix::random(dim, dim, s, &mut rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.query.rows
    }
}

/// `[h_f ×N | h_b ×N]`.
pub fn replicate_hidden<T: Real>(h: &FeatureTensor<T>, n: usize) -> Result<FeatureTensor<T>> {
    if !h.channels.is_multiple_of(2) {
        return Err(Error::invalid(format!("channel count must be even, got {}", h.channels)));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one view"));
    }
    let half = h.channels / 2 * h.plane();
    let (f, b) = h.data.split_at(half);
    let mut data = Vec::with_capacity(h.data.len() * n);
    for _ in 0..n {
        data.extend_from_slice(f);
    }
    for _ in 0..n {
        data.extend_from_slice(b);
    }
    let out = FeatureTensor { channels: h.channels * n, width: h.width, height: h.height, data };
    assert_eq!(out.data.len(), h.channels * n * h.plane());
    Ok(out)
}

/// `[g¹_f … gᴺ_f | g¹_b … gᴺ_b]`.
pub fn assemble_guidance<T: Real>(views: &[GuidanceView<T>]) -> Result<GuidanceTensor<T>> {
    let first = views.first().ok_or_else(|| Error::invalid("need at least one guidance view"))?;
    let (f, d) = (first.positive.rows, first.positive.cols);
    if f == 0 || d == 0 {
        return Err(Error::invalid("guidance needs at least one token of positive dimension"));
    }
    for (i, v) in views.iter().enumerate() {
        for m in [&v.positive, &v.negative] {
            if m.rows != f || m.cols != d {
                return Err(Error::invalid(format!("guidance view {i} is {}x{}, expected {f}x{d}", m.rows, m.cols)));
            }
            if m.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("guidance view {i} has non-finite values")));
            }
        }
    }
    let n = views.len();
    let mut data = vec![T::zero(); 2 * n * d * f];
    let blocks = views.iter().map(|v| &v.positive).chain(views.iter().map(|v| &v.negative));
    for (blk, m) in blocks.enumerate() {
        for c in 0..d {
            for t in 0..f {
                data[(blk * d + c) * f + t] = m.get(t, c);
            }
        }
    }
    let out = GuidanceTensor { channels: 2 * n * d, tokens: f, data };
    assert_eq!(out.data.len(), out.channels * out.tokens);
    Ok(out)
}

fn softmax<T: Real>(scores: &mut [T]) {
    let m = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in scores.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in scores.iter_mut() {
        *v /= s;
    }
}

/// Attention of one channel group: output (W·H × D, row-major) and
/// probabilities (W·H × F).
fn attend_group<T: Real>(
    h: &FeatureTensor<T>,
    g: &GuidanceTensor<T>,
    weights: &AttentionWeights<T>,
    group: usize,
) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let d = weights.dim();
    let c0 = group * d;
    let keys: Vec<Vec<T>> = (0..g.tokens).map(|t| weights.key.left_mul(&g.token(c0, d, t))).collect();
    let values: Vec<Vec<T>> = (0..g.tokens).map(|t| weights.value.left_mul(&g.token(c0, d, t))).collect();
    let scale = T::one() / T::from_usize_lossy(d).sqrt();
    let mut outs = Vec::with_capacity(h.plane());
    let mut probs = Vec::with_capacity(h.plane());
    for p in 0..h.plane() {
        let q = weights.query.left_mul(&h.token(c0, d, p));
        let mut s: Vec<T> = keys.iter().map(|k| q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale).collect();
        softmax(&mut s);
        let mut o = vec![T::zero(); d];
        for (w, v) in s.iter().zip(&values) {
            for (oi, &vi) in o.iter_mut().zip(v) {
                *oi += *w * vi;
            }
        }
        outs.push(o);
        probs.push(s);
    }
    (outs, probs)
}

fn check_layouts<T: Real>(h: &FeatureTensor<T>, g: &GuidanceTensor<T>, weights: &AttentionWeights<T>) -> Result<usize> {
    let d = weights.dim();
    if d == 0 || h.channels != g.channels || !h.channels.is_multiple_of(2 * d) {
        return Err(Error::invalid(format!(
            "block layouts disagree: hidden has {} channels, guidance {}, projection dim {d}",
            h.channels, g.channels
        )));
    }
    Ok(h.channels / (2 * d))
}

/// `Z = XAttn(g̃, h̃)`: each of the 2N channel groups attends, with queries
/// from its hidden channels, to the tokens of the matching guidance block.
pub fn decoupled_cross_attention<T: Real>(
    h: &FeatureTensor<T>,
    g: &GuidanceTensor<T>,
    weights: &AttentionWeights<T>,
) -> Result<FeatureTensor<T>> {
    let n = check_layouts(h, g, weights)?;
    let d = weights.dim();
    let mut z = FeatureTensor::zeros(h.channels, h.width, h.height);
    for group in 0..2 * n {
        let (outs, _) = attend_group(h, g, weights, group);
        for (p, o) in outs.iter().enumerate() {
            for (k, &v) in o.iter().enumerate() {
                z.data[(group * d + k) * h.plane() + p] = v;
            }
        }
    }
    assert_eq!(z.channels, 2 * n * d);
    Ok(z)
}

/// Attention probabilities of every channel group, `W·H × F` each.
pub fn attention_maps<T: Real>(
    h: &FeatureTensor<T>,
    g: &GuidanceTensor<T>,
    weights: &AttentionWeights<T>,
) -> Result<Vec<Matrix<T>>> {
    let n = check_layouts(h, g, weights)?;
    Ok((0..2 * n)
        .map(|group| {
            let (_, probs) = attend_group(h, g, weights, group);
            Matrix { rows: h.plane(), cols: g.tokens, data: probs.concat() }
        })
        .collect())
}

/// Inside region i, takes the positive and negative groups of view i.
pub fn aggregate_regions<T: Real>(z: &FeatureTensor<T>, layout: &RegionLayout) -> Result<FeatureTensor<T>> {
    let n = layout.len();
    if n == 0 || !z.channels.is_multiple_of(2 * n) {
        return Err(Error::invalid(format!("{} channels cannot split into {n} views", z.channels)));
    }
    if (layout.width, layout.height) != (z.width, z.height) {
        return Err(Error::invalid("layout and feature sizes differ"));
    }
    let owner = layout.owners()?;
    let d = z.channels / (2 * n);
    let mut out = FeatureTensor::zeros(2 * d, z.width, z.height);
    let plane = z.plane();
    for (p, &i) in owner.iter().enumerate() {
        for k in 0..d {
            out.data[k * plane + p] = z.data[(i * d + k) * plane + p];
            out.data[(d + k) * plane + p] = z.data[((n + i) * d + k) * plane + p];
        }
    }
    Ok(out)
}

/// Replicate, assemble, attend and aggregate.
pub fn decoupled_pass<T: Real>(
    h: &FeatureTensor<T>,
    views: &[GuidanceView<T>],
    layout: &RegionLayout,
    weights: &AttentionWeights<T>,
) -> Result<FeatureTensor<T>> {
    if views.len() != layout.len() {
        return Err(Error::invalid(format!("{} guidance views but {} regions", views.len(), layout.len())));
    }
    if h.channels != 2 * weights.dim() {
        return Err(Error::invalid(format!("hidden has {} channels, projections expect {}", h.channels, 2 * weights.dim())));
    }
    let ht = replicate_hidden(h, views.len())?;
    let gt = assemble_guidance(views)?;
    assert_eq!((ht.channels, ht.width, ht.height), (h.channels * views.len(), h.width, h.height));
    assert_eq!((gt.channels, gt.tokens), (h.channels * views.len(), views[0].positive.rows));
    let z = decoupled_cross_attention(&ht, &gt, weights)?;
    aggregate_regions(&z, layout)
}
