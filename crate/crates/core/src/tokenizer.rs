//! Scene to BEV features to instance tokens.
//!
//! The scene is rasterized into a semantic grid, encoded per cell by a
//! learned affine map with `tanh`, and sampled bilinearly at each instance's
//! reference point. Each instance token is an MLP over the instance's
//! geometric attributes plus a projection of that sample.

use numkit::{Binder, Tape, Tensor, Var};

use crate::error::Result;
use crate::evalkit::OrientedRect;
use crate::nn::{scatter_rows, Builder, Init, Linear, Mlp};
use crate::scene::{resample_polyline, AgentState, Command, MapKind, MapPolyline, Point, Scene};

pub const CHANNELS: usize = 6;
pub const MAP_POINTS: usize = 10;
pub const AGENT_ATTRS: usize = 10;
pub const MAP_ATTRS: usize = 3 + 2 * MAP_POINTS;
pub const EGO_ATTRS: usize = 3;
/// Supersampling factor per axis when painting agent rectangles.
const SUPERSAMPLE: usize = 4;

/// `H x W x C` semantic occupancy grid over `[-R, R]²`. Row `r` spans
/// increasing `y`, column `c` increasing `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct BevGrid {
    pub h: usize,
    pub w: usize,
    pub extent: f64,
    data: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(h: usize, w: usize, extent: f64) -> Self {
        Self {
            h,
            w,
            extent,
            data: vec![0.0; h * w * CHANNELS],
        }
    }

    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.w + c) * CHANNELS + ch]
    }

    fn set_max(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        let cell = &mut self.data[(r * self.w + c) * CHANNELS + ch];
        *cell = cell.max(v);
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            2.0 * self.extent / self.w as f64,
            2.0 * self.extent / self.h as f64,
        )
    }

    pub fn cell_center(&self, r: usize, c: usize) -> Point {
        let (cw, ch) = self.cell_size();
        [
            -self.extent + (c as f64 + 0.5) * cw,
            -self.extent + (r as f64 + 0.5) * ch,
        ]
    }

    /// Cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let (cw, ch) = self.cell_size();
        let c = ((p[0] + self.extent) / cw).floor();
        let r = ((p[1] + self.extent) / ch).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.w && (r as usize) < self.h)
            .then_some((r as usize, c as usize))
    }

    pub fn channel_sum(&self, ch: usize) -> f64 {
        self.data.iter().skip(ch).step_by(CHANNELS).sum()
    }

    /// `(H·W) x C`, row `r·W + c`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.h * self.w, CHANNELS, self.data.clone()).expect("grid shape")
    }

    /// Bilinear interpolation weights over cell rows of [`Self::to_tensor`];
    /// neighbours outside the grid contribute zero.
    pub fn bilinear_weights(&self, p: Point) -> Vec<(usize, f64)> {
        let (cw, ch) = self.cell_size();
        let u = (p[0] + self.extent) / cw - 0.5;
        let v = (p[1] + self.extent) / ch - 0.5;
        let (c0, r0) = (u.floor(), v.floor());
        let (fu, fv) = (u - c0, v - r0);
        let mut out = Vec::with_capacity(4);
        for (dr, wr) in [(0.0, 1.0 - fv), (1.0, fv)] {
            for (dc, wc) in [(0.0, 1.0 - fu), (1.0, fu)] {
                let (r, c) = (r0 + dr, c0 + dc);
                let wgt = wr * wc;
                if wgt > 0.0
                    && r >= 0.0
                    && c >= 0.0
                    && (r as usize) < self.h
                    && (c as usize) < self.w
                {
                    out.push((r as usize * self.w + c as usize, wgt));
                }
            }
        }
        out
    }
}

fn map_channel(kind: MapKind) -> usize {
    3 + kind.index()
}

/// Paints agents as filled oriented rectangles (fractional cell coverage)
/// and polylines as one-cell-wide strokes.
pub fn rasterize(scene: &Scene, h: usize, w: usize, extent: f64) -> BevGrid {
    let mut grid = BevGrid::zeros(h, w, extent);
    let (cw, chh) = grid.cell_size();
    for a in &scene.agents {
        let rect = OrientedRect::new(a.pos, a.heading, a.size);
        let corners = rect.corners();
        let lo = [
            corners.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
            corners.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
        ];
        let hi = [
            corners
                .iter()
                .map(|p| p[0])
                .fold(f64::NEG_INFINITY, f64::max),
            corners
                .iter()
                .map(|p| p[1])
                .fold(f64::NEG_INFINITY, f64::max),
        ];
        let c_lo = (((lo[0] + extent) / cw).floor().max(0.0)) as usize;
        let r_lo = (((lo[1] + extent) / chh).floor().max(0.0)) as usize;
        let c_hi = (((hi[0] + extent) / cw).floor()).min(w as f64 - 1.0);
        let r_hi = (((hi[1] + extent) / chh).floor()).min(h as f64 - 1.0);
        if c_hi < 0.0 || r_hi < 0.0 {
            continue;
        }
        let ch = a.class.index();
        for r in r_lo..=r_hi as usize {
            for c in c_lo..=c_hi as usize {
                let x0 = -extent + c as f64 * cw;
                let y0 = -extent + r as f64 * chh;
                let mut hits = 0;
                for i in 0..SUPERSAMPLE {
                    for j in 0..SUPERSAMPLE {
                        let p = [
                            x0 + (j as f64 + 0.5) / SUPERSAMPLE as f64 * cw,
                            y0 + (i as f64 + 0.5) / SUPERSAMPLE as f64 * chh,
                        ];
                        if rect.contains(p) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    grid.set_max(r, c, ch, hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64);
                }
            }
        }
    }
    let step = cw.min(chh) / 4.0;
    for m in &scene.map {
        let ch = map_channel(m.kind);
        for seg in m.points.windows(2) {
            let len = crate::scene::dist(seg[0], seg[1]);
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 0..=n {
                let t = k as f64 / n as f64;
                let p = [
                    seg[0][0] + t * (seg[1][0] - seg[0][0]),
                    seg[0][1] + t * (seg[1][1] - seg[0][1]),
                ];
                if let Some((r, c)) = grid.cell_of(p) {
                    grid.set_max(r, c, ch, 1.0);
                }
            }
        }
    }
    grid
}

pub fn agent_attributes(a: &AgentState, extent: f64) -> [f64; AGENT_ATTRS] {
    let mut v = [0.0; AGENT_ATTRS];
    v[0] = a.pos[0] / extent;
    v[1] = a.pos[1] / extent;
    v[2] = a.heading.sin();
    v[3] = a.heading.cos();
    v[4] = a.speed / 10.0;
    v[5] = a.size[0] / 5.0;
    v[6] = a.size[1] / 5.0;
    v[7 + a.class.index()] = 1.0;
    v
}

/// Polyline resampled to [`MAP_POINTS`] equidistant points.
pub fn map_points(m: &MapPolyline) -> Vec<Point> {
    resample_polyline(&m.points, MAP_POINTS)
}

pub fn map_attributes(m: &MapPolyline, extent: f64) -> [f64; MAP_ATTRS] {
    let mut v = [0.0; MAP_ATTRS];
    v[m.kind.index()] = 1.0;
    for (i, p) in map_points(m).iter().enumerate() {
        v[3 + 2 * i] = p[0] / extent;
        v[4 + 2 * i] = p[1] / extent;
    }
    v
}

/// Centroid of the resampled polyline.
pub fn map_reference(m: &MapPolyline) -> Point {
    let pts = map_points(m);
    let n = pts.len().max(1) as f64;
    [
        pts.iter().map(|p| p[0]).sum::<f64>() / n,
        pts.iter().map(|p| p[1]).sum::<f64>() / n,
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TokenizerDims {
    pub grid_h: usize,
    pub grid_w: usize,
    pub extent: f64,
    pub d: usize,
    pub d_bev: usize,
    pub hidden: usize,
    pub n_agents: usize,
    pub n_map: usize,
}

#[derive(Clone, Debug)]
pub struct TokenizerParams {
    pub dims: TokenizerDims,
    pub bev: Linear,
    pub sample_proj: Linear,
    pub ego: Mlp,
    pub agent: Mlp,
    pub map: Mlp,
}

/// Instance tokens with validity masks. Masked rows are exactly zero.
#[derive(Clone, Debug)]
pub struct TokenizedScene {
    pub ego: Var,
    pub agents: Var,
    pub agent_mask: Vec<bool>,
    pub map: Var,
    pub map_mask: Vec<bool>,
}

impl TokenizerParams {
    pub fn new(bld: &mut Builder, dims: TokenizerDims) -> Result<Self> {
        let (d, h) = (dims.d, dims.hidden);
        Ok(Self {
            bev: Linear::new(bld, "tok.bev", CHANNELS, dims.d_bev, Init::Xavier)?,
            sample_proj: Linear::new(bld, "tok.sample", dims.d_bev, d, Init::Xavier)?,
            ego: Mlp::new(bld, "tok.ego", EGO_ATTRS, h, d, Init::Xavier)?,
            agent: Mlp::new(bld, "tok.agent", AGENT_ATTRS, h, d, Init::Xavier)?,
            map: Mlp::new(bld, "tok.map", MAP_ATTRS, h, d, Init::Xavier)?,
            dims,
        })
    }

    pub fn rasterize(&self, scene: &Scene) -> BevGrid {
        rasterize(scene, self.dims.grid_h, self.dims.grid_w, self.dims.extent)
    }

    /// `tanh(G W + b)`: `(H·W) x d_bev`.
    pub fn bev_encode(&self, tape: &mut Tape, bind: &mut Binder, grid: &BevGrid) -> Result<Var> {
        let g = tape.constant(grid.to_tensor());
        let y = self.bev.forward(tape, bind, g)?;
        Ok(tape.tanh(y))
    }

    #[allow(clippy::too_many_arguments)]
    fn tokens(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        mlp: &Mlp,
        f_bev: Var,
        grid: &BevGrid,
        attrs: Vec<Vec<f64>>,
        refs: Vec<Point>,
    ) -> Result<Var> {
        let a = tape.constant(Tensor::from_rows(&attrs)?);
        let t = mlp.forward(tape, bind, a)?;
        let weights: Vec<_> = refs.iter().map(|p| grid.bilinear_weights(*p)).collect();
        let s = tape.mix_rows(f_bev, &weights)?;
        let s = self.sample_proj.forward(tape, bind, s)?;
        Ok(tape.add(t, s)?)
    }

    pub fn instance_tokens(
        &self,
        tape: &mut Tape,
        bind: &mut Binder,
        f_bev: Var,
        grid: &BevGrid,
        scene: &Scene,
    ) -> Result<TokenizedScene> {
        let dims = &self.dims;
        let ego = self.tokens(
            tape,
            bind,
            &self.ego,
            f_bev,
            grid,
            vec![ego_attributes(scene.command).to_vec()],
            vec![[0.0, 0.0]],
        )?;

        let agents: Vec<&AgentState> = scene.agents.iter().take(dims.n_agents).collect();
        let agent_mask: Vec<bool> = (0..dims.n_agents).map(|i| i < agents.len()).collect();
        let agent_tokens = if agents.is_empty() {
            tape.constant(Tensor::zeros(dims.n_agents, dims.d))
        } else {
            let t = self.tokens(
                tape,
                bind,
                &self.agent,
                f_bev,
                grid,
                agents
                    .iter()
                    .map(|a| agent_attributes(a, dims.extent).to_vec())
                    .collect(),
                agents.iter().map(|a| a.pos).collect(),
            )?;
            scatter_rows(tape, t, &agent_mask)?
        };

        let polys: Vec<&MapPolyline> = scene.map.iter().take(dims.n_map).collect();
        let map_mask: Vec<bool> = (0..dims.n_map).map(|i| i < polys.len()).collect();
        let map_tokens = if polys.is_empty() {
            tape.constant(Tensor::zeros(dims.n_map, dims.d))
        } else {
            let t = self.tokens(
                tape,
                bind,
                &self.map,
                f_bev,
                grid,
                polys
                    .iter()
                    .map(|m| map_attributes(m, dims.extent).to_vec())
                    .collect(),
                polys.iter().map(|m| map_reference(m)).collect(),
            )?;
            scatter_rows(tape, t, &map_mask)?
        };

        Ok(TokenizedScene {
            ego,
            agents: agent_tokens,
            agent_mask,
            map: map_tokens,
            map_mask,
        })
    }
}

pub fn ego_attributes(command: Command) -> [f64; EGO_ATTRS] {
    command.one_hot()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AgentClass, GtFuture};

    pub(crate) fn scene_with(agents: Vec<AgentState>, map: Vec<MapPolyline>) -> Scene {
        let n = agents.len();
        Scene {
            ego: AgentState {
                id: 0,
                class: AgentClass::Car,
                pos: [0.0, 0.0],
                heading: 0.0,
                speed: 0.0,
                yaw_rate: 0.0,
                size: [4.5, 2.0],
            },
            agents,
            map,
            gt_future: GtFuture {
                ego: vec![[0.0, 0.0]; 6],
                agents: vec![vec![[0.0, 0.0]; 6]; n],
            },
            command: Command::Straight,
        }
    }

    fn agent(class: AgentClass, pos: Point, heading: f64, size: [f64; 2]) -> AgentState {
        AgentState {
            id: 1,
            class,
            pos,
            heading,
            speed: 0.0,
            yaw_rate: 0.0,
            size,
        }
    }

    #[test]
    fn empty_scene_gives_zero_grid() {
        let g = rasterize(&scene_with(vec![], vec![]), 32, 32, 50.0);
        assert!((0..CHANNELS).all(|c| g.channel_sum(c) == 0.0));
    }

    #[test]
    fn car_at_origin_paints_only_car_channel() {
        let g = rasterize(
            &scene_with(
                vec![agent(AgentClass::Car, [0.0, 0.0], 0.0, [4.0, 2.0])],
                vec![],
            ),
            32,
            32,
            50.0,
        );
        assert!(g.channel_sum(0) > 0.0);
        assert_eq!(g.channel_sum(1), 0.0);
        assert_eq!(g.channel_sum(2), 0.0);
    }

    #[test]
    fn painted_area_matches_rectangle_area() {
        // cell area (100/32)^2; the painted coverage should match within 50%
        let cell_area = (100.0f64 / 32.0).powi(2);
        for pos in [[0.0, 0.0], [1.3, -0.4], [10.0, 7.7], [-20.2, 3.1]] {
            let g = rasterize(
                &scene_with(vec![agent(AgentClass::Car, pos, 0.0, [4.0, 2.0])], vec![]),
                32,
                32,
                50.0,
            );
            let ratio = g.channel_sum(0) / (8.0 / cell_area);
            assert!((0.5..=1.5).contains(&ratio), "pos {pos:?}: ratio {ratio}");
        }
    }

    #[test]
    fn polyline_stroke_is_continuous() {
        let m = MapPolyline {
            kind: MapKind::RoadBoundary,
            points: vec![[-40.0, 5.3], [40.0, 5.3]],
        };
        let g = rasterize(&scene_with(vec![], vec![m]), 32, 32, 50.0);
        let (r, _) = g.cell_of([0.0, 5.3]).unwrap();
        let painted: Vec<usize> = (0..32).filter(|&c| g.get(r, c, 4) == 1.0).collect();
        let (c0, c1) = (
            g.cell_of([-40.0, 5.3]).unwrap().1,
            g.cell_of([40.0, 5.3]).unwrap().1,
        );
        assert_eq!(painted, (c0..=c1).collect::<Vec<_>>());
        assert_eq!(g.channel_sum(3), 0.0);
    }

    #[test]
    fn bilinear_weights_sum_to_one_inside() {
        let g = BevGrid::zeros(32, 32, 50.0);
        for p in [[0.0, 0.0], [12.3, -7.9], [-48.0, 47.0]] {
            let s: f64 = g.bilinear_weights(p).iter().map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // at a cell centre the sample is that cell alone
        let c = g.cell_center(3, 5);
        assert_eq!(g.bilinear_weights(c), vec![(3 * 32 + 5, 1.0)]);
        // half a cell beyond the edge only half the mass remains
        let s: f64 = g.bilinear_weights([50.0, 0.0]).iter().map(|(_, w)| w).sum();
        assert!((s - 0.5).abs() < 1e-12);
    }
}
