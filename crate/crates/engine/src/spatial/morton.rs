//! Z-order (Morton) encoding: 32 bits per axis over a configured planar
//! domain, bit-interleaved into a 64-bit key (x on even bits, y on odd).

/// Planar encoding domain; points outside clamp to the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Domain {
    fn default() -> Self {
        // lon/lat treated as planar
        Domain {
            x_min: -180.0,
            x_max: 180.0,
            y_min: -90.0,
            y_max: 90.0,
        }
    }
}

const AXIS_STEPS: f64 = 4294967296.0; // 2^32

impl Domain {
    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.x_max - self.x_min) / AXIS_STEPS,
            (self.y_max - self.y_min) / AXIS_STEPS,
        )
    }

    fn quantize_axis(v: f64, min: f64, max: f64) -> (u32, bool) {
        let clamped = v.clamp(min, max);
        let frac = (clamped - min) / (max - min);
        let q = (frac * AXIS_STEPS).floor().min(AXIS_STEPS - 1.0) as u32;
        (q, clamped != v)
    }

    /// Quantize a point; the flag reports out-of-domain clamping.
    pub fn quantize(&self, x: f64, y: f64) -> (u32, u32, bool) {
        let (qx, cx) = Self::quantize_axis(x, self.x_min, self.x_max);
        let (qy, cy) = Self::quantize_axis(y, self.y_min, self.y_max);
        (qx, qy, cx || cy)
    }

    /// Coordinate rectangle of the quantized cell (qx, qy) at full depth.
    pub fn cell_rect(&self, qx: u32, qy: u32) -> [f64; 4] {
        let (cx, cy) = self.cell_size();
        [
            self.x_min + qx as f64 * cx,
            self.y_min + qy as f64 * cy,
            self.x_min + (qx as f64 + 1.0) * cx,
            self.y_min + (qy as f64 + 1.0) * cy,
        ]
    }
}

fn spread(x: u32) -> u64 {
    let mut x = x as u64;
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

fn compact(x: u64) -> u32 {
    let mut x = x & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x >> 4)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x >> 8)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x >> 16)) & 0x0000_0000_FFFF_FFFF;
    x as u32
}

pub fn interleave(qx: u32, qy: u32) -> u64 {
    spread(qx) | (spread(qy) << 1)
}

pub fn deinterleave(z: u64) -> (u32, u32) {
    (compact(z), compact(z >> 1))
}

/// Encode a point; the flag reports clamping.
pub fn encode(domain: &Domain, x: f64, y: f64) -> (u64, bool) {
    let (qx, qy, clamped) = domain.quantize(x, y);
    (interleave(qx, qy), clamped)
}

/// Decode to the quantization cell's minimum corner.
pub fn decode(domain: &Domain, z: u64) -> (f64, f64) {
    let (qx, qy) = deinterleave(z);
    let (cx, cy) = domain.cell_size();
    (domain.x_min + qx as f64 * cx, domain.y_min + qy as f64 * cy)
}

/// Decompose a quantized query rectangle into at most `max_intervals`
/// inclusive z-key intervals that cover it (a superset; the exact geometry
/// test filters false positives).
pub fn z_intervals(
    qx_range: (u32, u32),
    qy_range: (u32, u32),
    max_intervals: usize,
) -> Vec<(u64, u64)> {
    #[derive(Clone, Copy)]
    struct Cell {
        depth: u32,
        qx: u32, // depth-bit prefix
        qy: u32,
    }
    let cell_z_range = |c: &Cell| -> (u64, u64) {
        if c.depth == 0 {
            return (0, u64::MAX);
        }
        let shift = 32 - c.depth;
        let lo = interleave(c.qx << shift, c.qy << shift);
        let mask = if c.depth == 32 { 0 } else { (1u64 << (64 - 2 * c.depth)) - 1 };
        (lo, lo | mask)
    };
    let cell_axis_range = |prefix: u32, depth: u32| -> (u32, u32) {
        if depth == 0 {
            return (0, u32::MAX);
        }
        let shift = 32 - depth;
        let lo = prefix << shift;
        let hi = lo | (((1u64 << shift) - 1) as u32);
        (lo, hi)
    };

    let mut out: Vec<(u64, u64)> = Vec::new();
    let mut stack = vec![Cell { depth: 0, qx: 0, qy: 0 }];
    while let Some(cell) = stack.pop() {
        let (cx_lo, cx_hi) = cell_axis_range(cell.qx, cell.depth);
        let (cy_lo, cy_hi) = cell_axis_range(cell.qy, cell.depth);
        let disjoint = cx_hi < qx_range.0 || cx_lo > qx_range.1 || cy_hi < qy_range.0 || cy_lo > qy_range.1;
        if disjoint {
            continue;
        }
        let contained = cx_lo >= qx_range.0 && cx_hi <= qx_range.1 && cy_lo >= qy_range.0 && cy_hi <= qy_range.1;
        let budget_tight = out.len() + stack.len() + 4 >= max_intervals;
        if contained || cell.depth == 32 || budget_tight {
            out.push(cell_z_range(&cell));
            continue;
        }
        for child in 0..4u32 {
            stack.push(Cell {
                depth: cell.depth + 1,
                qx: (cell.qx << 1) | (child & 1),
                qy: (cell.qy << 1) | (child >> 1),
            });
        }
    }
    out.sort_unstable();
    // merge adjacent/overlapping intervals
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(out.len());
    for (lo, hi) in out {
        match merged.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    debug_assert!(merged.len() <= max_intervals);
    merged
}
