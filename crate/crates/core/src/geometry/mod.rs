//! Region algebra over `R^d`: finite unions of half-open boxes in any
//! dimension and convex polygons in the plane, with Lebesgue measures of
//! intersections and the Gram matrix of pairwise intersection measures.
//!
//! Box-only regions carry exact rational measures. Polygon measures go
//! through Sutherland–Hodgman clipping and are accurate to rounding.

mod boxes;
mod polygon;

use nalgebra::{DMatrix, SymmetricEigen};
use num::{BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sublinear::GParams;

pub use boxes::{normalize, HalfOpenBox};
pub use polygon::{Point, Polygon};

/// Eigenvalue floor below which a Gram matrix is declared indefinite,
/// relative to `max(1, trace)`.
pub const PSD_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Pairwise disjoint boxes of a common dimension.
    Boxes { dim: usize, parts: Vec<HalfOpenBox> },
    /// Interior-disjoint convex polygons (d = 2).
    Polygons(Vec<Polygon>),
}

impl Region {
    pub fn empty(dim: usize) -> Region {
        Region::Boxes {
            dim,
            parts: Vec::new(),
        }
    }

    pub fn from_box(b: HalfOpenBox) -> Region {
        Region::from_boxes(vec![b]).expect("single box has consistent dimension")
    }

    pub fn unit_cube(dim: usize) -> Region {
        Region::from_box(HalfOpenBox::new(vec![0.0; dim], vec![1.0; dim]).expect("valid"))
    }

    /// Union of possibly overlapping boxes.
    pub fn from_boxes(list: Vec<HalfOpenBox>) -> Result<Region> {
        let dim = list.first().map_or(0, HalfOpenBox::dim);
        if list.iter().any(|b| b.dim() != dim) {
            return Err(Error::Geometry("boxes in a union must share one dimension".into()));
        }
        Ok(Region::Boxes {
            dim,
            parts: normalize(&list),
        })
    }

    pub fn from_polygon(p: Polygon) -> Region {
        Region::Polygons(vec![p])
    }

    /// Union of convex polygons; overlapping parts are rejected since
    /// polygon unions are not re-partitioned.
    pub fn from_polygons(list: Vec<Polygon>) -> Result<Region> {
        for (i, a) in list.iter().enumerate() {
            for b in &list[i + 1..] {
                let overlap = a.intersection_area(b);
                if overlap > 1e-12 * a.area().max(b.area()).max(1.0) {
                    return Err(Error::Geometry(format!(
                        "polygon parts overlap (area {overlap:e}); split them into disjoint pieces"
                    )));
                }
            }
        }
        Ok(Region::Polygons(list))
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Boxes { dim, .. } => *dim,
            Region::Polygons(_) => 2,
        }
    }

    fn as_polygons(&self) -> Result<Vec<Polygon>> {
        match self {
            Region::Polygons(p) => Ok(p.clone()),
            Region::Boxes { dim, parts } => {
                if *dim != 2 && !parts.is_empty() {
                    return Err(Error::Geometry(format!(
                        "polygon geometry needs d = 2, region has d = {dim}"
                    )));
                }
                parts.iter().map(Polygon::from_box).collect()
            }
        }
    }

    pub fn union(regions: &[Region]) -> Result<Region> {
        if regions.iter().all(|r| matches!(r, Region::Boxes { .. })) {
            let list: Vec<HalfOpenBox> = regions
                .iter()
                .flat_map(|r| match r {
                    Region::Boxes { parts, .. } => parts.clone(),
                    Region::Polygons(_) => unreachable!(),
                })
                .collect();
            let dim = regions.first().map_or(0, Region::dim);
            if regions.iter().any(|r| r.dim() != dim) {
                return Err(Error::Geometry("regions in a union must share one dimension".into()));
            }
            return Ok(Region::Boxes {
                dim,
                parts: normalize(&list),
            });
        }
        let mut polys = Vec::new();
        for r in regions {
            polys.extend(r.as_polygons()?);
        }
        Region::from_polygons(polys)
    }

    pub fn measure(&self) -> f64 {
        match self {
            Region::Boxes { parts, .. } => self
                .measure_exact()
                .and_then(|m| m.to_f64())
                .unwrap_or_else(|| parts.iter().map(HalfOpenBox::volume).sum()),
            Region::Polygons(p) => p.iter().map(Polygon::area).sum(),
        }
    }

    /// Exact measure for box regions.
    pub fn measure_exact(&self) -> Option<BigRational> {
        match self {
            Region::Boxes { parts, .. } => Some(boxes::total_volume_exact(parts)),
            Region::Polygons(_) => None,
        }
    }

    pub fn intersection(&self, other: &Region) -> Result<Region> {
        self.check_dims(other)?;
        match (self, other) {
            (Region::Boxes { dim, parts: a }, Region::Boxes { parts: b, .. }) => {
                let parts = a
                    .iter()
                    .flat_map(|p| b.iter().filter_map(move |q| p.intersect(q)))
                    .collect();
                Ok(Region::Boxes { dim: *dim, parts })
            }
            _ => {
                let (a, b) = (self.as_polygons()?, other.as_polygons()?);
                Ok(Region::Polygons(
                    a.iter()
                        .flat_map(|p| b.iter().filter_map(move |q| p.intersection(q)))
                        .collect(),
                ))
            }
        }
    }

    /// Box difference `self \ other`; only defined for box regions.
    pub fn difference(&self, other: &Region) -> Result<Region> {
        self.check_dims(other)?;
        match (self, other) {
            (Region::Boxes { dim, parts: a }, Region::Boxes { parts: b, .. }) => {
                let mut pieces = a.clone();
                for cut in b {
                    pieces = pieces.iter().flat_map(|p| p.subtract(cut)).collect();
                }
                Ok(Region::Boxes {
                    dim: *dim,
                    parts: pieces,
                })
            }
            _ => Err(Error::Geometry("difference is only supported for box regions".into())),
        }
    }

    fn check_dims(&self, other: &Region) -> Result<()> {
        let empty = |r: &Region| matches!(r, Region::Boxes { parts, .. } if parts.is_empty());
        if self.dim() != other.dim() && !empty(self) && !empty(other) {
            return Err(Error::Geometry(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Lebesgue measure of `a ∩ b`.
pub fn intersect_measure(a: &Region, b: &Region) -> Result<f64> {
    if let Some(m) = intersect_measure_exact(a, b)? {
        return Ok(m.to_f64().unwrap_or(f64::NAN));
    }
    a.check_dims(b)?;
    let (pa, pb) = (a.as_polygons()?, b.as_polygons()?);
    // sum in a canonical order so the result is symmetric in (a, b)
    let forward: f64 = pa.iter().map(|p| pb.iter().map(|q| p.intersection_area(q)).sum::<f64>()).sum();
    let backward: f64 = pb.iter().map(|q| pa.iter().map(|p| q.intersection_area(p)).sum::<f64>()).sum();
    Ok(0.5 * (forward + backward))
}

/// Exact measure of `a ∩ b` when both are box regions.
pub fn intersect_measure_exact(a: &Region, b: &Region) -> Result<Option<BigRational>> {
    a.check_dims(b)?;
    match (a, b) {
        (Region::Boxes { parts: pa, .. }, Region::Boxes { parts: pb, .. }) => {
            let mut total = BigRational::zero();
            for p in pa {
                for q in pb {
                    if let Some(c) = p.intersect(q) {
                        total += c.volume_exact();
                    }
                }
            }
            Ok(Some(total))
        }
        _ => Ok(None),
    }
}

fn signed_permutation(o: &[Vec<f64>]) -> Option<Vec<(usize, f64)>> {
    let d = o.len();
    let mut perm = vec![(usize::MAX, 0.0); d];
    for src in 0..d {
        let mut hit = None;
        for (dst, row) in o.iter().enumerate() {
            let v = row[src];
            if v == 1.0 || v == -1.0 {
                if hit.is_some() {
                    return None;
                }
                hit = Some((dst, v));
            } else if v != 0.0 {
                return None;
            }
        }
        perm[src] = hit?;
    }
    Some(perm)
}

/// Image `{O x + p : x in r}` of a region under a rigid motion. Boxes stay
/// boxes under signed axis permutations in any dimension; general rotations
/// are supported in the plane and turn boxes into polygons.
pub fn transform_region(r: &Region, p: &[f64], o: &[Vec<f64>]) -> Result<Region> {
    let d = r.dim();
    if p.len() != d || o.len() != d || o.iter().any(|row| row.len() != d) {
        return Err(Error::Geometry(format!("rigid motion must be {d}-dimensional")));
    }
    if p.iter().chain(o.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Geometry("rigid motion has non-finite entries".into()));
    }
    for i in 0..d {
        for j in 0..d {
            let dot: f64 = (0..d).map(|k| o[k][i] * o[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            if (dot - want).abs() > 1e-12 {
                return Err(Error::Geometry(format!(
                    "matrix is not orthogonal: (O^T O)[{i}][{j}] = {dot}"
                )));
            }
        }
    }
    if let (Region::Boxes { parts, .. }, Some(perm)) = (r, signed_permutation(o)) {
        return Ok(Region::Boxes {
            dim: d,
            parts: parts.iter().map(|b| b.signed_permute(&perm, p)).collect(),
        });
    }
    if d != 2 {
        return Err(Error::Geometry(format!(
            "general rotations are only supported in d = 2, got d = {d}"
        )));
    }
    let m = [[o[0][0], o[0][1]], [o[1][0], o[1][1]]];
    Ok(Region::Polygons(
        r.as_polygons()?.iter().map(|poly| poly.transform(&m, [p[0], p[1]])).collect(),
    ))
}

pub fn rotation(theta: f64) -> Vec<Vec<f64>> {
    let (s, c) = theta.sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// Gram matrix of a finite family together with the ambiguity parameters:
/// the complete description of one finite-dimensional G-normal law with
/// generating function `Q -> G(<Q, Lambda>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramLaw {
    pub lambda: DMatrix<f64>,
    pub params: GParams,
    pub labels: Vec<String>,
    /// Row-major exact entries when every region is a box union.
    pub exact: Option<Vec<BigRational>>,
}

impl GramLaw {
    /// Builds a law from an explicit matrix; symmetry and PSD are checked.
    pub fn from_matrix(lambda: DMatrix<f64>, params: GParams) -> Result<GramLaw> {
        params.validate()?;
        let n = lambda.nrows();
        if lambda.ncols() != n {
            return Err(Error::InvalidInput("Gram matrix must be square".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Gram matrix entry".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if lambda[(i, j)] != lambda[(j, i)] {
                    return Err(Error::InvalidInput(format!("Gram matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        let law = GramLaw {
            labels: (1..=n).map(|i| format!("A{i}")).collect(),
            lambda,
            params,
            exact: None,
        };
        let min = law.min_eigenvalue();
        if min < -PSD_TOLERANCE * law.trace().max(1.0) {
            return Err(Error::NotPsd { eigenvalue: min });
        }
        Ok(law)
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.lambda.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.lambda.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -PSD_TOLERANCE * self.trace().max(1.0)
    }

    /// `<Q, Lambda> = sum_ij q_ij lambda_ij`.
    pub fn contract(&self, q: &DMatrix<f64>) -> f64 {
        self.lambda.component_mul(q).sum()
    }

    fn exact_entry(&self, i: usize, j: usize) -> BigRational {
        match &self.exact {
            Some(e) => e[i * self.dim() + j].clone(),
            None => BigRational::from_float(self.lambda[(i, j)]).expect("finite"),
        }
    }

    /// `<Q, Lambda>` in exact rational arithmetic (`Q` entries are taken
    /// at their exact binary values).
    pub fn contract_exact(&self, q: &DMatrix<f64>) -> BigRational {
        let n = self.dim();
        let mut acc = BigRational::zero();
        for i in 0..n {
            for j in 0..n {
                let qij = q[(i, j)];
                if qij != 0.0 {
                    acc += BigRational::from_float(qij).expect("finite") * self.exact_entry(i, j);
                }
            }
        }
        acc
    }

    /// The generating function `G(<Q, Lambda>)`.
    pub fn generating(&self, q: &DMatrix<f64>) -> f64 {
        self.params.g(self.contract(q))
    }

    pub fn generating_exact(&self, q: &DMatrix<f64>) -> BigRational {
        self.params.g_exact(&self.contract_exact(q))
    }

    /// Law of the sub-vector picked (and reordered) by `idx`.
    pub fn select(&self, idx: &[usize]) -> GramLaw {
        let n = idx.len();
        let lambda = DMatrix::from_fn(n, n, |i, j| self.lambda[(idx[i], idx[j])]);
        let exact = self.exact.as_ref().map(|e| {
            let d = self.dim();
            let mut out = Vec::with_capacity(n * n);
            for &i in idx {
                for &j in idx {
                    out.push(e[i * d + j].clone());
                }
            }
            out
        });
        GramLaw {
            lambda,
            params: self.params,
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            exact,
        }
    }
}

/// `Lambda_ij = measure(A_i ∩ A_j)` for the given regions.
pub fn gram_matrix(regions: &[Region], params: GParams) -> Result<GramLaw> {
    params.validate()?;
    let n = regions.len();
    if let Some(d) = regions.first().map(Region::dim) {
        if regions.iter().any(|r| r.dim() != d && r.measure() > 0.0) {
            return Err(Error::Geometry("regions must share one dimension".into()));
        }
    }
    let all_boxes = regions.iter().all(|r| matches!(r, Region::Boxes { .. }));
    let mut lambda = DMatrix::zeros(n, n);
    let mut exact = all_boxes.then(|| vec![BigRational::zero(); n * n]);
    for i in 0..n {
        for j in i..n {
            let (v, e) = match intersect_measure_exact(&regions[i], &regions[j])? {
                Some(e) => (e.to_f64().unwrap_or(f64::NAN), Some(e)),
                None => (intersect_measure(&regions[i], &regions[j])?, None),
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("measure of A{} ∩ A{}", i + 1, j + 1)));
            }
            lambda[(i, j)] = v;
            lambda[(j, i)] = v;
            if let (Some(ex), Some(e)) = (exact.as_mut(), e) {
                ex[i * n + j] = e.clone();
                ex[j * n + i] = e;
            }
        }
    }
    let law = GramLaw {
        lambda,
        params,
        labels: (1..=n).map(|i| format!("A{i}")).collect(),
        exact,
    };
    let min = law.min_eigenvalue();
    if min < -PSD_TOLERANCE * law.trace().max(1.0) {
        return Err(Error::NotPsd { eigenvalue: min });
    }
    Ok(law)
}

/// JSON literal for a region:
/// `{"box": {"lo": [..], "hi": [..]}}`, `{"polygon": [[x, y], ..]}` or
/// `{"union": [..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLiteral {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polygon(Vec<[f64; 2]>),
    Union(Vec<RegionLiteral>),
}

impl RegionLiteral {
    pub fn to_region(&self) -> Result<Region> {
        match self {
            RegionLiteral::Box { lo, hi } => Ok(Region::from_box(HalfOpenBox::new(lo.clone(), hi.clone())?)),
            RegionLiteral::Polygon(v) => Ok(Region::from_polygon(Polygon::new(v.clone())?)),
            RegionLiteral::Union(parts) => {
                let regions = parts.iter().map(RegionLiteral::to_region).collect::<Result<Vec<_>>>()?;
                Region::union(&regions)
            }
        }
    }
}
