//! Tumour-region extraction. Two interchangeable segmenters share the
//! surrounding machinery: a marker-based watershed flood over the Sobel
//! gradient with imposed minima, and seeded region growing driven by the
//! running region mean. Both finish by reconstructing the selected
//! foreground under the binarized image, then report size and shape
//! statistics.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::morphology::{self, disc_element, doubled_reach_element, StructuringElement};
use crate::preprocess::{self, DEFAULT_BINARIZE_THRESHOLD};
use crate::raster::{BinaryMask, GrayImage, LabelMap};

/// Disc radius used to erode internal markers out of the binarized mask.
pub const DEFAULT_MARKER_RADIUS: u32 = 3;

/// Disc radius for the final reconstruction under the binarized mask.
pub const DEFAULT_RECONSTRUCT_RADIUS: u32 = 3;

/// Default region-growing admission tolerance.
pub const DEFAULT_GROW_TOLERANCE: f64 = 0.15;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("erosion removed every foreground component; no internal marker remains")]
    NoInternalMarker,
    #[error("marker set has no marked pixels")]
    EmptyMarkers,
    #[error("seed list is empty")]
    NoSeeds,
    #[error("seed ({x}, {y}) is outside the image")]
    SeedOutOfBounds { x: usize, y: usize },
    #[error("tolerance {0} outside [0, 1]")]
    ToleranceOutOfRange(f64),
    #[error("markers and image have different dimensions")]
    DimensionMismatch,
    #[error("internal marker labels do not form a contiguous 1..=K set")]
    NonContiguousLabels,
    #[error("internal and external markers overlap at ({x}, {y})")]
    OverlappingMarkers { x: usize, y: usize },
    #[error(transparent)]
    Preprocess(#[from] preprocess::PreprocessError),
}

/// Segmentation back-end selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Watershed,
    RegionGrowing,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Watershed => "watershed",
            Method::RegionGrowing => "region-growing",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "watershed" => Ok(Method::Watershed),
            "region-growing" | "region_growing" => Ok(Method::RegionGrowing),
            other => Err(format!(
                "unknown method '{other}' (expected watershed or region-growing)"
            )),
        }
    }
}

/// Watershed seed labels: numbered internal object markers plus one
/// background (external) marker. The two pixel sets never overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSet {
    internal: LabelMap,
    external: BinaryMask,
}

impl MarkerSet {
    pub fn new(internal: LabelMap, external: BinaryMask) -> Result<Self, SegmentationError> {
        if (internal.width(), internal.height()) != (external.width(), external.height()) {
            return Err(SegmentationError::DimensionMismatch);
        }
        let k = internal.max_label();
        let mut seen = vec![false; k as usize + 1];
        for &l in internal.labels() {
            seen[l as usize] = true;
        }
        if !seen.iter().skip(1).all(|&s| s) {
            return Err(SegmentationError::NonContiguousLabels);
        }
        for (i, (&l, &e)) in internal.labels().iter().zip(external.bits()).enumerate() {
            if l > 0 && e {
                return Err(SegmentationError::OverlappingMarkers {
                    x: i % internal.width(),
                    y: i / internal.width(),
                });
            }
        }
        Ok(Self { internal, external })
    }

    pub fn internal(&self) -> &LabelMap {
        &self.internal
    }

    pub fn external(&self) -> &BinaryMask {
        &self.external
    }

    /// Number of internal markers (K).
    pub fn internal_count(&self) -> u32 {
        self.internal.max_label()
    }

    /// Internal markers plus the external marker if it has any pixels.
    pub fn marker_count(&self) -> u32 {
        self.internal_count() + u32::from(self.external.any())
    }

    pub fn is_empty(&self) -> bool {
        self.internal_count() == 0 && !self.external.any()
    }

    /// Union of all marked pixels.
    pub fn union_mask(&self) -> BinaryMask {
        let bits = self
            .internal
            .labels()
            .iter()
            .zip(self.external.bits())
            .map(|(&l, &e)| l > 0 || e)
            .collect();
        BinaryMask::new(self.internal.width(), self.internal.height(), bits)
            .expect("dimensions validated at construction")
    }
}

/// Labels 4-connected foreground components 1..=K in row-major
/// first-encounter order; background stays 0.
pub fn label_components(mask: &BinaryMask) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = LabelMap::zeros(w, h).expect("mask dims are valid");
    let mut next = 0u32;
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels.get(x, y) != 0 {
                continue;
            }
            next += 1;
            labels.set(x, y, next);
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (nx, ny) in neighbors4(cx, cy, w, h) {
                    if mask.get(nx, ny) && labels.get(nx, ny) == 0 {
                        labels.set(nx, ny, next);
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    labels
}

fn neighbors4(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let (x, y) = (x as isize, y as isize);
    [(x, y - 1), (x - 1, y), (x + 1, y), (x, y + 1)]
        .into_iter()
        .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
        .map(|(nx, ny)| (nx as usize, ny as usize))
}

/// Sobel gradient magnitude, rescaled so the largest magnitude maps to 1
/// (an all-constant image maps to all zeros). Replicate border.
pub fn sobel_gradient(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut mags = vec![0.0f64; w * h];
    let mut max_mag = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let p = |dx: isize, dy: isize| img.get_clamped(x as isize + dx, y as isize + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let m = (gx * gx + gy * gy).sqrt();
            mags[y * w + x] = m;
            max_mag = max_mag.max(m);
        }
    }
    if max_mag > 0.0 {
        for m in &mut mags {
            *m /= max_mag;
        }
    }
    GrayImage::new(w, h, mags).expect("normalized magnitudes lie in range")
}

/// Derives watershed markers from a binarized image: internal markers are
/// the 4-connected components that survive erosion by `se`; the external
/// marker is every pixel farther than twice the reach of `se` from the
/// foreground.
pub fn extract_markers(
    binary: &BinaryMask,
    se: &StructuringElement,
) -> Result<MarkerSet, SegmentationError> {
    let eroded = morphology::erode_mask(binary, se);
    if !eroded.any() {
        return Err(SegmentationError::NoInternalMarker);
    }
    let internal = label_components(&eroded);
    let external = morphology::dilate_mask(binary, &doubled_reach_element(se)).complement();
    // internal pixels sit inside the dilation, so the sets cannot overlap
    Ok(MarkerSet { internal, external })
}

/// Rewrites the relief so its regional minima are exactly the marker
/// pixels: markers are forced to 0 and everything else is lifted by at
/// least one gray level, then reconstruction by erosion (4-connected)
/// removes every unmarked minimum.
pub fn impose_minima(
    grad: &GrayImage,
    markers: &MarkerSet,
) -> Result<GrayImage, SegmentationError> {
    if (grad.width(), grad.height()) != (markers.internal.width(), markers.internal.height()) {
        return Err(SegmentationError::DimensionMismatch);
    }
    let epsilon = 1.0 / 255.0;
    let marked = markers.union_mask();
    let forced = GrayImage::from_fn(grad.width(), grad.height(), |x, y| {
        if marked.get(x, y) {
            0.0
        } else {
            1.0
        }
    })
    .expect("dims unchanged");
    let floor = GrayImage::from_fn(grad.width(), grad.height(), |x, y| {
        if marked.get(x, y) {
            0.0
        } else {
            (grad.get(x, y) + epsilon).min(1.0)
        }
    })
    .expect("dims unchanged");
    Ok(
        morphology::morph_reconstruct_by_erosion(&forced, &floor, &disc_element(1))
            .expect("forced relief dominates the floor pointwise"),
    )
}

/// Priority-flood watershed over the Sobel gradient of `img` with minima
/// imposed at the markers. Internal marker k floods label k, the external
/// marker floods label K+1, and pixels reached by two labels at once (or
/// cut off by such pixels) become watershed line 0.
pub fn watershed_segment(
    img: &GrayImage,
    markers: &MarkerSet,
) -> Result<LabelMap, SegmentationError> {
    if (img.width(), img.height()) != (markers.internal.width(), markers.internal.height()) {
        return Err(SegmentationError::DimensionMismatch);
    }
    if markers.is_empty() {
        return Err(SegmentationError::EmptyMarkers);
    }
    let relief = impose_minima(&sobel_gradient(img), markers)?;
    Ok(flood(&relief, markers))
}

const UNVISITED: u32 = u32::MAX;

#[derive(Debug, PartialEq)]
struct FloodEntry {
    value: f64,
    y: u32,
    x: u32,
}

impl Eq for FloodEntry {}

impl Ord for FloodEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
    }
}

impl PartialOrd for FloodEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn flood(relief: &GrayImage, markers: &MarkerSet) -> LabelMap {
    let (w, h) = (relief.width(), relief.height());
    let external_label = markers.internal_count() + 1;
    let mut labels = vec![UNVISITED; w * h];
    for (slot, (&l, &e)) in labels
        .iter_mut()
        .zip(markers.internal.labels().iter().zip(markers.external.bits()))
    {
        if l > 0 {
            *slot = l;
        } else if e {
            *slot = external_label;
        }
    }

    let mut heap: BinaryHeap<Reverse<FloodEntry>> = BinaryHeap::new();
    let push_unvisited_neighbors = |heap: &mut BinaryHeap<Reverse<FloodEntry>>,
                                    labels: &[u32],
                                    x: usize,
                                    y: usize| {
        for (nx, ny) in neighbors4(x, y, w, h) {
            if labels[ny * w + nx] == UNVISITED {
                heap.push(Reverse(FloodEntry {
                    value: relief.get(nx, ny),
                    y: ny as u32,
                    x: nx as u32,
                }));
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] != UNVISITED {
                push_unvisited_neighbors(&mut heap, &labels, x, y);
            }
        }
    }

    while let Some(Reverse(entry)) = heap.pop() {
        let (x, y) = (entry.x as usize, entry.y as usize);
        if labels[y * w + x] != UNVISITED {
            continue;
        }
        let mut claim = 0u32;
        let mut contested = false;
        for (nx, ny) in neighbors4(x, y, w, h) {
            let l = labels[ny * w + nx];
            if l != UNVISITED && l != 0 {
                if claim == 0 {
                    claim = l;
                } else if claim != l {
                    contested = true;
                }
            }
        }
        // exactly one claiming basin inherits; collisions and pixels walled
        // off by existing line pixels become line
        labels[y * w + x] = if contested { 0 } else { claim };
        push_unvisited_neighbors(&mut heap, &labels, x, y);
    }

    assert!(
        labels.iter().all(|&l| l != UNVISITED),
        "flood must reach every pixel"
    );
    LabelMap::new(w, h, labels).expect("dims are valid")
}

/// Grows a single region from the seed pixels: repeatedly admits the
/// unassigned 4-neighbor whose intensity is closest to the current region
/// mean, while that distance stays within `tolerance`. Ties prefer the
/// smaller (row, column). Seeds are `(x, y)` coordinates.
pub fn region_grow(
    img: &GrayImage,
    seeds: &[(usize, usize)],
    tolerance: f64,
) -> Result<BinaryMask, SegmentationError> {
    if seeds.is_empty() {
        return Err(SegmentationError::NoSeeds);
    }
    if !(0.0..=1.0).contains(&tolerance) {
        return Err(SegmentationError::ToleranceOutOfRange(tolerance));
    }
    let (w, h) = (img.width(), img.height());
    for &(x, y) in seeds {
        if x >= w || y >= h {
            return Err(SegmentationError::SeedOutOfBounds { x, y });
        }
    }

    let mut mask = BinaryMask::filled(w, h, false).expect("dims are valid");
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for &(x, y) in seeds {
        if !mask.get(x, y) {
            mask.set(x, y, true);
            sum += img.get(x, y);
            count += 1;
        }
    }

    let mut queued = vec![false; w * h];
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    let extend_frontier = |frontier: &mut Vec<(usize, usize)>,
                           queued: &mut Vec<bool>,
                           mask: &BinaryMask,
                           x: usize,
                           y: usize| {
        for (nx, ny) in neighbors4(x, y, w, h) {
            if !mask.get(nx, ny) && !queued[ny * w + nx] {
                queued[ny * w + nx] = true;
                frontier.push((nx, ny));
            }
        }
    };
    for &(x, y) in seeds {
        extend_frontier(&mut frontier, &mut queued, &mask, x, y);
    }

    while !frontier.is_empty() {
        let mean = sum / count as f64;
        let mut best_idx = 0usize;
        let mut best_key = (f64::INFINITY, usize::MAX, usize::MAX);
        for (i, &(x, y)) in frontier.iter().enumerate() {
            let key = ((img.get(x, y) - mean).abs(), y, x);
            if key.0 < best_key.0 || (key.0 == best_key.0 && (key.1, key.2) < (best_key.1, best_key.2))
            {
                best_key = key;
                best_idx = i;
            }
        }
        if best_key.0 > tolerance {
            break;
        }
        let (x, y) = frontier.swap_remove(best_idx);
        queued[y * w + x] = false;
        mask.set(x, y, true);
        sum += img.get(x, y);
        count += 1;
        extend_frontier(&mut frontier, &mut queued, &mask, x, y);
    }
    Ok(mask)
}

/// Size and shape summary of a segmented region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    /// Foreground pixels over total pixels.
    pub size_fraction: f64,
    /// `4*pi*A / P^2`, clamped to `[0, 1]`; 0 for an empty region.
    pub circularity: f64,
    /// `1 - circularity`.
    pub border_irregularity: f64,
    pub method: Method,
}

/// Tuning knobs for [`tumour_region`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionParams {
    pub binarize_threshold: f64,
    pub marker_radius: u32,
    pub reconstruct_radius: u32,
    pub grow_tolerance: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            binarize_threshold: DEFAULT_BINARIZE_THRESHOLD,
            marker_radius: DEFAULT_MARKER_RADIUS,
            reconstruct_radius: DEFAULT_RECONSTRUCT_RADIUS,
            grow_tolerance: DEFAULT_GROW_TOLERANCE,
        }
    }
}

/// Computes area, perimeter-derived circularity and border irregularity.
///
/// The perimeter counts exposed 4-neighbor edges (the image frame counts
/// as exposure), scaled by pi/4: axis-aligned edge counting overestimates
/// smooth boundary length by 4/pi on average, and without the correction
/// even a perfect disc would score far below 1.
pub fn region_stats(mask: &BinaryMask, method: Method) -> RegionStats {
    let area = mask.count();
    let total = mask.bits().len();
    if area == 0 {
        return RegionStats {
            size_fraction: 0.0,
            circularity: 0.0,
            border_irregularity: 1.0,
            method,
        };
    }
    let (w, h) = (mask.width(), mask.height());
    let mut edges = 0u64;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            for (nx, ny) in [(xi, yi - 1), (xi - 1, yi), (xi + 1, yi), (xi, yi + 1)] {
                let exposed = nx < 0
                    || ny < 0
                    || nx >= w as isize
                    || ny >= h as isize
                    || !mask.get(nx as usize, ny as usize);
                if exposed {
                    edges += 1;
                }
            }
        }
    }
    let perimeter = PI / 4.0 * edges as f64;
    let circularity = (4.0 * PI * area as f64 / (perimeter * perimeter)).min(1.0);
    RegionStats {
        size_fraction: area as f64 / total as f64,
        circularity,
        border_irregularity: 1.0 - circularity,
        method,
    }
}

/// Extracts the tumour region from a filtered image with the chosen
/// back-end and reports its statistics. An image with no pixel above the
/// binarization threshold yields an empty region (size 0) without error.
pub fn tumour_region(
    img: &GrayImage,
    method: Method,
    params: &RegionParams,
) -> Result<(BinaryMask, RegionStats), SegmentationError> {
    let binary = preprocess::binarize(img, params.binarize_threshold)?;
    if !binary.any() {
        return Ok((binary, region_stats_empty(method)));
    }
    let grown = match method {
        Method::Watershed => {
            let markers = extract_markers(&binary, &disc_element(params.marker_radius))?;
            let labels = watershed_segment(img, &markers)?;
            let k = markers.internal_count();
            labels.mask_where(|l| l >= 1 && l <= k)
        }
        Method::RegionGrowing => {
            let seed = centroid_seed(&binary);
            region_grow(img, &[seed], params.grow_tolerance)?
        }
    };
    // clip to the binarized foreground, then recover the full components
    // the segmenter touched
    let marker = grown.and(&binary);
    let region = morphology::reconstruct_mask(
        &marker,
        &binary,
        &disc_element(params.reconstruct_radius),
    )
    .expect("marker is clipped under the mask");
    let stats = region_stats(&region, method);
    Ok((region, stats))
}

fn region_stats_empty(method: Method) -> RegionStats {
    RegionStats {
        size_fraction: 0.0,
        circularity: 0.0,
        border_irregularity: 1.0,
        method,
    }
}

/// Seed for region growing: the centroid pixel of the largest 4-connected
/// foreground component (ties to the earliest component in row-major
/// order), snapped to the nearest component pixel when the centroid
/// itself falls outside the component.
fn centroid_seed(binary: &BinaryMask) -> (usize, usize) {
    let comps = label_components(binary);
    let k = comps.max_label() as usize;
    debug_assert!(k >= 1, "caller guarantees a non-empty mask");
    let mut counts = vec![0u64; k + 1];
    let mut sum_x = vec![0u64; k + 1];
    let mut sum_y = vec![0u64; k + 1];
    for y in 0..comps.height() {
        for x in 0..comps.width() {
            let l = comps.get(x, y) as usize;
            if l > 0 {
                counts[l] += 1;
                sum_x[l] += x as u64;
                sum_y[l] += y as u64;
            }
        }
    }
    // max_by_key keeps the last maximum, so scan in reverse label order to
    // prefer the earliest component on ties
    let largest = (1..=k).rev().max_by_key(|&l| counts[l]).expect("k >= 1");
    let cx = (sum_x[largest] as f64 / counts[largest] as f64).round() as usize;
    let cy = (sum_y[largest] as f64 / counts[largest] as f64).round() as usize;
    if comps.get(cx, cy) as usize == largest {
        return (cx, cy);
    }
    let mut best = (usize::MAX, usize::MAX, usize::MAX); // (dist2, y, x)
    for y in 0..comps.height() {
        for x in 0..comps.width() {
            if comps.get(x, y) as usize == largest {
                let dx = x.abs_diff(cx);
                let dy = y.abs_diff(cy);
                let key = (dx * dx + dy * dy, y, x);
                if key < best {
                    best = key;
                }
            }
        }
    }
    (best.2, best.1)
}
