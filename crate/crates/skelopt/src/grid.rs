//! Fixed structured grid of square bilinear elements.

use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Element edge length.
    pub h: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h: f64) -> Self {
        assert!(nx >= 1 && ny >= 1 && h > 0.0);
        Grid { nx, ny, h }
    }

    pub fn n_elems(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    /// Element index, row-major from the bottom-left.
    pub fn elem_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn elem_coords(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    pub fn node_coords(&self, node: usize) -> Vec2 {
        let ix = node % (self.nx + 1);
        let iy = node / (self.nx + 1);
        Vec2::new(ix as f64 * self.h, iy as f64 * self.h)
    }

    pub fn centroid(&self, e: usize) -> Vec2 {
        let (ix, iy) = self.elem_coords(e);
        Vec2::new((ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h)
    }

    /// Corner nodes of an element, counter-clockwise from the bottom-left.
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let (ix, iy) = self.elem_coords(e);
        [
            self.node_index(ix, iy),
            self.node_index(ix + 1, iy),
            self.node_index(ix + 1, iy + 1),
            self.node_index(ix, iy + 1),
        ]
    }

    /// Global DOF indices of an element (x then y per node).
    pub fn elem_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.elem_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.h
    }
}
