//! Ping-pong layout converter between the conv array and tensor memory.
//!
//! Two `t_oc x t_hw` register arrays alternate: one is filled with a
//! `t_oc`-channel column per cycle while the other drains one `t_hw`-pixel row
//! per cycle. The output port is shared, so only one array drains at a time.

use super::ArchParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConversionStats {
    pub cycles: u64,
    pub stalls: u64,
    pub tiles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Empty,
    Filling(usize),
    Full(u64),
    Draining(usize),
}

#[derive(Debug, Clone)]
pub struct LayoutConverter {
    pub t_oc: usize,
    pub t_hw: usize,
}

impl LayoutConverter {
    pub fn new(arch: &ArchParams) -> Self {
        Self { t_oc: arch.t_oc, t_hw: arch.t_hw }
    }

    /// Streams `columns` (each `t_oc` values, one per cycle at most) through the
    /// arrays. Returns the drained rows (each `t_hw` values) and timing.
    /// A trailing partial tile is zero padded.
    pub fn stream(&self, columns: &[Vec<i8>]) -> (Vec<Vec<i8>>, ConversionStats) {
        let (toc, thw) = (self.t_oc, self.t_hw);
        let mut regs = [vec![0i8; toc * thw], vec![0i8; toc * thw]];
        let mut state = [State::Empty; 2];
        let mut stats = ConversionStats { tiles: columns.len().div_ceil(thw) as u64, ..Default::default() };
        let mut rows = Vec::new();
        let mut next = 0;
        let mut tile_seq = 0u64;

        let busy = |state: &[State; 2]| state.iter().any(|s| *s != State::Empty);
        while next < columns.len() || busy(&state) {
            stats.cycles += 1;

            // output side: continue draining, or start on the oldest full array
            let draining = (0..2).find(|&a| matches!(state[a], State::Draining(_)));
            let oldest_full = (0..2)
                .filter_map(|a| match state[a] {
                    State::Full(seq) => Some((seq, a)),
                    _ => None,
                })
                .min()
                .map(|(_, a)| a);
            if let Some(a) = draining.or(oldest_full) {
                let r = match state[a] {
                    State::Draining(r) => r,
                    _ => 0,
                };
                rows.push(regs[a][r * thw..(r + 1) * thw].to_vec());
                state[a] = if r + 1 == toc { State::Empty } else { State::Draining(r + 1) };
            }

            // input side
            if next < columns.len() {
                let target = (0..2)
                    .find(|&a| matches!(state[a], State::Filling(_)))
                    .or_else(|| (0..2).find(|&a| state[a] == State::Empty));
                match target {
                    Some(a) => {
                        let j = match state[a] {
                            State::Filling(j) => j,
                            _ => {
                                regs[a].fill(0);
                                0
                            }
                        };
                        for (i, &v) in columns[next].iter().enumerate().take(toc) {
                            regs[a][i * thw + j] = v;
                        }
                        next += 1;
                        state[a] = if j + 1 == thw || next == columns.len() {
                            tile_seq += 1;
                            State::Full(tile_seq)
                        } else {
                            State::Filling(j + 1)
                        };
                    }
                    None => stats.stalls += 1,
                }
            }
        }
        (rows, stats)
    }
}

/// Cycles and stalls to pass `n_values` int8 values through the converter.
pub fn layout_convert_model(n_values: usize, arch: &ArchParams) -> ConversionStats {
    let cols = n_values.div_ceil(arch.t_oc);
    let zero = vec![0i8; arch.t_oc];
    let columns = vec![zero; cols];
    LayoutConverter::new(arch).stream(&columns).1
}
