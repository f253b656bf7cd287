//! JSON formats for spaces, elements, products, kernels and problem files.
//! Complex numbers are `[re, im]` pairs; matrices are lists of rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::products::{self, BlockSpec, PartialProduct};
use crate::quotients::{cmat, KernelSubspace, UcpCertificate};
use crate::spaces::{ConcreteOperatorSpace, MatrixElement};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mat(#[serde(with = "cmat")] pub ComplexMatrix);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceJson {
    pub d: usize,
    pub basis: Vec<Mat>,
    pub unit_index: Option<usize>,
    pub is_system: bool,
}

impl SpaceJson {
    pub fn from_space(s: &ConcreteOperatorSpace) -> Self {
        SpaceJson {
            d: s.ambient_dim(),
            basis: s.basis().iter().map(|b| Mat(b.clone())).collect(),
            unit_index: s.unit_index(),
            is_system: s.is_system(),
        }
    }

    /// Rejects an empty basis.
    pub fn build(&self) -> Result<ConcreteOperatorSpace> {
        if self.basis.is_empty() {
            return Err(Error::Input("space has an empty basis".into()));
        }
        ConcreteOperatorSpace::new(self.d, self.basis.iter().map(|m| m.0.clone()).collect(), self.unit_index, self.is_system)
    }
}

/// Coefficients indexed [row][col][g].
pub type ElementJson = Vec<Vec<Vec<C64>>>;
/// Tensor coefficients indexed [row][col][g][h] over S ⊗ T.
pub type TensorElementJson = Vec<Vec<Vec<Vec<C64>>>>;

pub fn element_from_json(e: &ElementJson, dim: usize) -> Result<MatrixElement> {
    let rows = e.len();
    let cols = e.first().map(|r| r.len()).unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(Error::Input("element is empty".into()));
    }
    for (i, r) in e.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Input(format!("element row {i} has {} entries, expected {cols}", r.len())));
        }
        for (j, v) in r.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Input(format!("entry ({i},{j}) has {} coefficients, expected {dim}", v.len())));
            }
        }
    }
    Ok(MatrixElement::from_fn(rows, cols, dim, |i, j, g| e[i][j][g]))
}

pub fn element_to_json(x: &MatrixElement) -> ElementJson {
    (0..x.rows()).map(|i| (0..x.cols()).map(|j| x.entry(i, j).to_vec()).collect()).collect()
}

/// Flattens [g][h] to the index g·dim T + h.
pub fn tensor_element_from_json(e: &TensorElementJson, ds: usize, dt: usize) -> Result<MatrixElement> {
    let flat: Result<ElementJson> = e
        .iter()
        .map(|r| {
            r.iter()
                .map(|v| {
                    if v.len() != ds || v.iter().any(|w| w.len() != dt) {
                        return Err(Error::Input(format!("tensor entries must be {ds} x {dt} coefficient arrays")));
                    }
                    Ok(v.iter().flatten().cloned().collect())
                })
                .collect()
        })
        .collect();
    element_from_json(&flat?, ds * dt)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockJson {
    pub left: Vec<Vec<C64>>,
    pub right: Vec<Vec<C64>>,
    /// table[p][q] = m(left[p], right[q])
    pub table: Vec<Vec<Vec<C64>>>,
}

/// Either explicit blocks or a built-in construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProductJson {
    Explicit {
        dim: usize,
        unit: usize,
        #[serde(default)]
        labels: Vec<String>,
        blocks: Vec<BlockJson>,
        #[serde(default)]
        adjoint: Option<Mat>,
    },
    Builtin {
        /// trivial | full_ambient | anticommutator | haagerup | commuting | cuntz | free_unitary | snk
        builtin: String,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        k: Option<usize>,
    },
}

/// Spaces a built-in product may need.
#[derive(Default)]
pub struct ProductContext<'a> {
    pub space: Option<&'a ConcreteOperatorSpace>,
    pub s: Option<&'a ConcreteOperatorSpace>,
    pub t: Option<&'a ConcreteOperatorSpace>,
}

impl ProductJson {
    pub fn build(&self, ctx: &ProductContext) -> Result<PartialProduct> {
        match self {
            ProductJson::Explicit { dim, unit, labels, blocks, adjoint } => {
                let specs = blocks
                    .iter()
                    .map(|b| BlockSpec { left: b.left.clone(), right: b.right.clone(), table: b.table.clone() })
                    .collect();
                PartialProduct::new("custom", *dim, *unit, labels.clone(), specs, adjoint.as_ref().map(|m| m.0.clone()))
            }
            ProductJson::Builtin { builtin, n, k } => {
                let need = |s: Option<&ConcreteOperatorSpace>, what: &str| {
                    s.cloned().ok_or_else(|| Error::Input(format!("builtin '{builtin}' needs '{what}'")))
                };
                let count = |v: &Option<usize>, what: &str| v.ok_or_else(|| Error::Input(format!("builtin '{builtin}' needs '{what}'")));
                match builtin.as_str() {
                    "trivial" => {
                        let s = need(ctx.space, "space")?;
                        let u = s.unit_index().ok_or_else(|| Error::Precondition("space has no unit".into()))?;
                        products::trivial_product(s.dim(), u)
                    }
                    "full_ambient" => products::full_ambient_product(&need(ctx.space, "space")?),
                    "anticommutator" => products::anticommutator_product(&need(ctx.space, "space")?),
                    "haagerup" => products::haagerup_product(&need(ctx.s, "s")?, &need(ctx.t, "t")?),
                    "commuting" => products::commuting_product(&need(ctx.s, "s")?, &need(ctx.t, "t")?),
                    "cuntz" => products::cuntz_product(count(n, "n")?),
                    "free_unitary" => products::free_unitary_product(count(n, "n")?),
                    "snk" => Ok(crate::correlations::snk_build(count(n, "n")?, count(k, "k")?)?.product),
                    other => Err(Error::Input(format!("unknown builtin product '{other}'"))),
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateJson {
    pub d: usize,
    pub choi: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelJson {
    pub span: Vec<Vec<C64>>,
    pub certificate: Option<CertificateJson>,
    #[serde(default)]
    pub is_product_certificate: bool,
}

impl KernelJson {
    pub fn from_kernel(k: &KernelSubspace) -> Self {
        KernelJson {
            span: k.span.clone(),
            certificate: k.certificate.as_ref().map(|c| CertificateJson { d: c.d, choi: Mat(c.choi.clone()) }),
            is_product_certificate: k.is_product_certificate,
        }
    }

    pub fn build(&self, space: &ConcreteOperatorSpace) -> Result<KernelSubspace> {
        let cert = self.certificate.as_ref().map(|c| UcpCertificate { d: c.d, choi: c.choi.0.clone() });
        KernelSubspace::new(space, self.span.clone(), cert, self.is_product_certificate)
    }
}

/// A problem file for the command line: only the fields a command needs are read.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProblemJson {
    #[serde(default)]
    pub space: Option<SpaceJson>,
    #[serde(default)]
    pub s: Option<SpaceJson>,
    #[serde(default)]
    pub t: Option<SpaceJson>,
    #[serde(default)]
    pub element: Option<serde_json::Value>,
    #[serde(default)]
    pub product: Option<ProductJson>,
    #[serde(default)]
    pub kernel: Option<KernelJson>,
    /// φ on the basis of the product's space
    #[serde(default)]
    pub state: Option<Vec<C64>>,
}

pub fn parse_problem(text: &str) -> Result<ProblemJson> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("malformed problem file: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[test]
    fn space_round_trip() {
        let s = ConcreteOperatorSpace::matrix_algebra(2);
        let text = serde_json::to_string(&SpaceJson::from_space(&s)).unwrap();
        let back: SpaceJson = serde_json::from_str(&text).unwrap();
        let b = back.build().unwrap();
        assert_eq!(b.dim(), 4);
        assert_eq!(b.unit_index(), Some(0));
        assert!(text.starts_with("{\"d\":2,\"basis\":[[[[1.0,0.0],[0.0,0.0]]"));
    }

    #[test]
    fn empty_space_is_rejected() {
        let s: SpaceJson = serde_json::from_str(r#"{"d":2,"basis":[],"unit_index":null,"is_system":false}"#).unwrap();
        assert!(matches!(s.build(), Err(Error::Input(_))));
    }

    #[test]
    fn tensor_elements_flatten_row_major() {
        let e: TensorElementJson = vec![vec![vec![vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(3.0, 0.0), c(4.0, 0.0)]]]];
        let x = tensor_element_from_json(&e, 2, 2).unwrap();
        assert_eq!(x.entry(0, 0), &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        assert!(tensor_element_from_json(&e, 2, 3).is_err());
    }

    #[test]
    fn builtin_and_explicit_products() {
        let p: ProductJson = serde_json::from_str(r#"{"builtin":"cuntz","n":2}"#).unwrap();
        assert_eq!(p.build(&ProductContext::default()).unwrap().dim(), 6);
        let p: ProductJson = serde_json::from_str(r#"{"builtin":"full_ambient"}"#).unwrap();
        assert!(p.build(&ProductContext::default()).is_err());
        let p: ProductJson = serde_json::from_str(
            r#"{"dim":2,"unit":0,"blocks":[{"left":[[[0,0],[1,0]]],"right":[[[0,0],[1,0]]],"table":[[[[0,0],[1,0]]]]}]}"#,
        )
        .unwrap();
        let m = p.build(&ProductContext::default()).unwrap();
        assert_eq!(m.apply(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap(), vec![c(0.0, 0.0), c(1.0, 0.0)]);
    }
}
