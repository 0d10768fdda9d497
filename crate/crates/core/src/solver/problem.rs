//! Parameter layout, residual blocks and normal-equation assembly for the
//! joint cost `c_rpj + c_cross`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x6, SMatrix, Vector2, Vector3};

use super::loss::{cauchy_cost, cauchy_derivatives, Corrector};
use super::SolverOptions;
use crate::camera::{project, project_with_jacobian};
use crate::dataset::Dataset;
use crate::geom::{left_jacobian, skew, Pose, PoseParams};
use crate::init::InitialGuess;
use crate::real::{lit, Real};

pub type BlockJacobian<T> = SMatrix<T, 2, 6>;

/// Where each pose lives in the flat parameter vector. Every block is six
/// numbers: axis-angle rotation then translation.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    n_cameras: usize,
    shared_z: bool,
    pairs: Vec<(usize, usize)>,
    pair_index: BTreeMap<(usize, usize), usize>,
}

impl ParamLayout {
    pub fn new(n_cameras: usize, shared_z: bool, pairs: Vec<(usize, usize)>) -> Self {
        let pair_index = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Self {
            n_cameras,
            shared_z,
            pairs,
            pair_index,
        }
    }

    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn shared_z(&self) -> bool {
        self.shared_z
    }

    pub fn n_board_to_ee(&self) -> usize {
        if self.shared_z {
            1
        } else {
            self.n_cameras
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_blocks(&self) -> usize {
        self.n_cameras + self.n_board_to_ee() + self.pairs.len()
    }

    pub fn n_params(&self) -> usize {
        6 * self.n_blocks()
    }

    pub fn hand_eye_block(&self, k: usize) -> usize {
        k
    }

    /// Board-to-end-effector block used for chains through camera `k`.
    pub fn board_to_ee_block(&self, k: usize) -> usize {
        self.n_cameras + if self.shared_z { 0 } else { k }
    }

    pub fn pair_block(&self, k: usize, t: usize) -> Option<usize> {
        self.pair_index
            .get(&(k, t))
            .map(|i| self.n_cameras + self.n_board_to_ee() + i)
    }
}

/// All unknowns of the joint problem: `N` hand-eye transforms `T_W^Ck`, one
/// (or, in the independent ablation, `N`) board-to-end-effector transforms
/// and one `T_Ct^Ck` per ordered co-visible pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBlock<T: Real> {
    pub layout: ParamLayout,
    pub values: DVector<T>,
}

impl<T: Real> ParameterBlock<T> {
    pub fn zeros(layout: ParamLayout) -> Self {
        let values = DVector::zeros(layout.n_params());
        Self { layout, values }
    }

    pub fn from_guess(d: &Dataset<T>, guess: &InitialGuess<T>, options: &SolverOptions) -> Self {
        let pairs = if options.cross_term_enabled {
            d.co_visible_pairs().into_iter().collect()
        } else {
            Vec::new()
        };
        let layout = ParamLayout::new(d.n_cameras(), options.shared_z_enabled, pairs);
        let mut p = Self::zeros(layout);
        for k in 0..d.n_cameras() {
            p.set(p.layout.hand_eye_block(k), &guess.hand_eye[k]);
        }
        if options.shared_z_enabled {
            p.set(p.layout.board_to_ee_block(0), &guess.board_to_ee);
        } else {
            for k in 0..d.n_cameras() {
                let z = guess.board_to_ee_per_camera.get(k).unwrap_or(&guess.board_to_ee);
                p.set(p.layout.board_to_ee_block(k), z);
            }
        }
        let pairs = p.layout.pairs.clone();
        for (k, t) in pairs {
            let pose = guess
                .cam_to_cam
                .get(&(k, t))
                .copied()
                .unwrap_or_else(|| guess.hand_eye[k].compose(&guess.hand_eye[t].inverse()));
            let b = p.layout.pair_block(k, t).expect("pair in layout");
            p.set(b, &pose);
        }
        p
    }

    pub fn params(&self, block: usize) -> PoseParams<T> {
        PoseParams::from_slice(&self.values.as_slice()[6 * block..6 * block + 6])
    }

    pub fn pose(&self, block: usize) -> Pose<T> {
        self.params(block).to_pose()
    }

    pub fn set(&mut self, block: usize, pose: &Pose<T>) {
        let a = pose.to_params().as_array();
        self.values.as_mut_slice()[6 * block..6 * block + 6].copy_from_slice(&a);
    }

    pub fn hand_eye(&self, k: usize) -> Pose<T> {
        self.pose(self.layout.hand_eye_block(k))
    }

    pub fn board_to_ee(&self, k: usize) -> Pose<T> {
        self.pose(self.layout.board_to_ee_block(k))
    }

    pub fn cam_to_cam(&self, k: usize, t: usize) -> Option<Pose<T>> {
        self.layout.pair_block(k, t).map(|b| self.pose(b))
    }

    /// Re-canonicalizes every rotation vector into the `pi` ball.
    pub fn canonicalize(&mut self) {
        for b in 0..self.layout.n_blocks() {
            let mut p = self.params(b);
            p.canonicalize();
            let a = p.as_array();
            self.values.as_mut_slice()[6 * b..6 * b + 6].copy_from_slice(&a);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockKind {
    /// Camera `k` observing the board directly.
    Reprojection,
    /// Camera `k` observing the board through camera `t`.
    Cross { through: usize },
}

/// `L` corner residuals of one detection `(j, k)` along one chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ResidualBlock {
    pub pose: usize,
    pub camera: usize,
    pub kind: BlockKind,
}

/// Sums accumulated from one residual evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostReport<T> {
    pub c_rpj: T,
    pub c_cross: T,
    pub c_total: T,
    pub residual_count: usize,
}

pub struct Linearization<T: Real> {
    pub cost: CostReport<T>,
    pub hessian: DMatrix<T>,
    pub gradient: DVector<T>,
}

struct ChainLink<T: Real> {
    pose: Pose<T>,
    block: Option<usize>,
}

/// The assembled least-squares problem over a dataset.
pub struct Problem<'a, T: Real> {
    pub dataset: &'a Dataset<T>,
    pub layout: ParamLayout,
    pub blocks: Vec<ResidualBlock>,
    pub options: SolverOptions,
    board_points: Vec<Vector3<T>>,
    caps: Vec<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(dataset: &'a Dataset<T>, layout: ParamLayout, options: SolverOptions) -> Self {
        let mut blocks: Vec<ResidualBlock> = dataset
            .detections()
            .map(|(j, k, _)| ResidualBlock {
                pose: j,
                camera: k,
                kind: BlockKind::Reprojection,
            })
            .collect();
        if options.cross_term_enabled {
            for j in 0..dataset.n_poses() {
                let x = dataset.cross_matrix(j).expect("pose index in range");
                for (k, t) in x.ordered_pairs() {
                    if layout.pair_block(k, t).is_some() {
                        blocks.push(ResidualBlock {
                            pose: j,
                            camera: k,
                            kind: BlockKind::Cross { through: t },
                        });
                    }
                }
            }
        }
        let caps = dataset
            .cameras()
            .iter()
            .map(|c| c.image_diagonal() * lit(10.0))
            .collect();
        Self {
            dataset,
            layout,
            blocks,
            options,
            board_points: dataset.board().corner_points(),
            caps,
        }
    }

    pub fn corner_count(&self) -> usize {
        self.board_points.len()
    }

    fn chain(&self, block: &ResidualBlock, x: &ParameterBlock<T>) -> Vec<ChainLink<T>> {
        let robot = ChainLink {
            pose: *self.dataset.robot_pose(block.pose),
            block: None,
        };
        let link = |b: usize| ChainLink {
            pose: x.pose(b),
            block: Some(b),
        };
        match block.kind {
            BlockKind::Reprojection => vec![
                link(self.layout.hand_eye_block(block.camera)),
                robot,
                link(self.layout.board_to_ee_block(block.camera)),
            ],
            BlockKind::Cross { through } => vec![
                link(
                    self.layout
                        .pair_block(block.camera, through)
                        .expect("cross block has a pair parameter"),
                ),
                link(self.layout.hand_eye_block(through)),
                robot,
                link(self.layout.board_to_ee_block(through)),
            ],
        }
    }

    fn capped_residual(&self, camera: usize) -> Vector2<T> {
        let c = self.caps[camera] * lit(std::f64::consts::FRAC_1_SQRT_2);
        Vector2::new(c, c)
    }

    /// Raw (non-robust) residuals of a block, one per corner, in pixels.
    pub fn block_residuals(&self, block: &ResidualBlock, x: &ParameterBlock<T>) -> Vec<Vector2<T>> {
        let chain = self.chain(block, x);
        let composed = chain
            .iter()
            .fold(Pose::identity(), |acc, l| acc.compose(&l.pose));
        let intr = &self.dataset.cameras()[block.camera];
        let detected = self
            .dataset
            .detection(block.pose, block.camera)
            .expect("residual block has a detection");
        self.board_points
            .iter()
            .zip(detected)
            .map(|(p, d)| match project(&composed.apply(p), intr) {
                Ok(px) => px - d,
                Err(_) => self.capped_residual(block.camera),
            })
            .collect()
    }

    /// Residual and per-parameter-block Jacobians of one corner.
    pub fn corner_jacobian(
        &self,
        block: &ResidualBlock,
        corner: usize,
        x: &ParameterBlock<T>,
    ) -> (Vector2<T>, Vec<(usize, BlockJacobian<T>)>) {
        let chain = self.chain(block, x);
        let jl: Vec<Option<Matrix3<T>>> = chain
            .iter()
            .map(|l| l.block.map(|b| left_jacobian(&x.params(b).rotation)))
            .collect();
        self.corner_jacobian_with(block, corner, &chain, &jl)
    }

    fn corner_jacobian_with(
        &self,
        block: &ResidualBlock,
        corner: usize,
        chain: &[ChainLink<T>],
        left_jacobians: &[Option<Matrix3<T>>],
    ) -> (Vector2<T>, Vec<(usize, BlockJacobian<T>)>) {
        // inner[i]: point after applying links i..n, innermost first
        let n = chain.len();
        let mut inner = vec![self.board_points[corner]; n + 1];
        for i in (0..n).rev() {
            inner[i] = chain[i].pose.apply(&inner[i + 1]);
        }
        let p_cam = inner[0];
        let intr = &self.dataset.cameras()[block.camera];
        let detected = self.dataset.detection(block.pose, block.camera).expect("detection")[corner];
        let (px, jproj) = match project_with_jacobian(&p_cam, intr) {
            Ok(v) => v,
            Err(_) => return (self.capped_residual(block.camera), Vec::new()),
        };
        let mut jacs = Vec::with_capacity(n);
        let mut prefix = Matrix3::<T>::identity();
        for i in 0..n {
            if let (Some(b), Some(jl)) = (chain[i].block, left_jacobians[i]) {
                let rq = chain[i].pose.rotation.apply(&inner[i + 1]);
                let dp_dv = -(prefix * skew(&rq)) * jl;
                let mut dp = Matrix3x6::<T>::zeros();
                dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&dp_dv);
                dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&prefix);
                jacs.push((b, jproj * dp));
            }
            prefix *= chain[i].pose.rotation.matrix();
        }
        (px - detected, jacs)
    }

    /// Robust cost split into reprojection and cross terms.
    pub fn cost(&self, x: &ParameterBlock<T>) -> CostReport<T> {
        let scale: T = lit(self.options.cauchy_scale);
        let mut report = CostReport {
            c_rpj: T::zero(),
            c_cross: T::zero(),
            c_total: T::zero(),
            residual_count: 0,
        };
        for block in &self.blocks {
            let mut sum = T::zero();
            for r in self.block_residuals(block, x) {
                sum += cauchy_cost(r.norm_squared(), scale);
                report.residual_count += 1;
            }
            match block.kind {
                BlockKind::Reprojection => report.c_rpj += sum,
                BlockKind::Cross { .. } => report.c_cross += sum,
            }
        }
        report.c_total = report.c_rpj + report.c_cross;
        report
    }

    /// Robust cost, gradient and Gauss-Newton Hessian at `x`, accumulated in
    /// the fixed block order.
    pub fn linearize(&self, x: &ParameterBlock<T>) -> Linearization<T> {
        let np = self.layout.n_params();
        let mut hessian = DMatrix::<T>::zeros(np, np);
        let mut gradient = DVector::<T>::zeros(np);
        let scale: T = lit(self.options.cauchy_scale);
        let mut report = CostReport {
            c_rpj: T::zero(),
            c_cross: T::zero(),
            c_total: T::zero(),
            residual_count: 0,
        };

        let poses: Vec<Pose<T>> = (0..self.layout.n_blocks()).map(|b| x.pose(b)).collect();
        let jls: Vec<Matrix3<T>> = (0..self.layout.n_blocks())
            .map(|b| left_jacobian(&x.params(b).rotation))
            .collect();

        for block in &self.blocks {
            let chain: Vec<ChainLink<T>> = self
                .chain_blocks(block)
                .into_iter()
                .map(|b| match b {
                    Some(b) => ChainLink {
                        pose: poses[b],
                        block: Some(b),
                    },
                    None => ChainLink {
                        pose: *self.dataset.robot_pose(block.pose),
                        block: None,
                    },
                })
                .collect();
            let jl: Vec<Option<Matrix3<T>>> = chain.iter().map(|l| l.block.map(|b| jls[b])).collect();
            let mut sum = T::zero();
            for corner in 0..self.board_points.len() {
                let (r, jacs) = self.corner_jacobian_with(block, corner, &chain, &jl);
                let s = r.norm_squared();
                let (rho, rho1, rho2) = cauchy_derivatives(s, scale);
                sum += rho;
                report.residual_count += 1;
                if jacs.is_empty() {
                    continue;
                }
                let corr = Corrector::new(s, rho1, rho2);
                let rs = r * corr.residual_scaling();
                let cj: Vec<(usize, BlockJacobian<T>)> = jacs
                    .iter()
                    .map(|(b, j)| (*b, corr.correct_jacobian(&r, j)))
                    .collect();
                for (a, ja) in &cj {
                    let g = ja.transpose() * rs;
                    let mut gv = gradient.rows_mut(6 * a, 6);
                    gv += g;
                    for (b, jb) in &cj {
                        let h = ja.transpose() * jb;
                        let mut hv = hessian.view_mut((6 * a, 6 * b), (6, 6));
                        hv += h;
                    }
                }
            }
            match block.kind {
                BlockKind::Reprojection => report.c_rpj += sum,
                BlockKind::Cross { .. } => report.c_cross += sum,
            }
        }
        report.c_total = report.c_rpj + report.c_cross;
        Linearization {
            cost: report,
            hessian,
            gradient,
        }
    }

    fn chain_blocks(&self, block: &ResidualBlock) -> Vec<Option<usize>> {
        match block.kind {
            BlockKind::Reprojection => vec![
                Some(self.layout.hand_eye_block(block.camera)),
                None,
                Some(self.layout.board_to_ee_block(block.camera)),
            ],
            BlockKind::Cross { through } => vec![
                self.layout.pair_block(block.camera, through),
                Some(self.layout.hand_eye_block(through)),
                None,
                Some(self.layout.board_to_ee_block(through)),
            ],
        }
    }

    /// Root-mean-square direct reprojection error per camera, in pixels.
    pub fn rms_per_camera(&self, x: &ParameterBlock<T>) -> Vec<T> {
        let n = self.dataset.n_cameras();
        let mut sums = vec![T::zero(); n];
        let mut counts = vec![0usize; n];
        for (j, k, _) in self.dataset.detections() {
            let block = ResidualBlock {
                pose: j,
                camera: k,
                kind: BlockKind::Reprojection,
            };
            for r in self.block_residuals(&block, x) {
                sums[k] += r.norm_squared();
                counts[k] += 1;
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                if c == 0 {
                    T::zero()
                } else {
                    (s / lit(c as f64)).sqrt()
                }
            })
            .collect()
    }
}
