use crate::model::NodeId;

use super::{SchedState, Stall};

/// Rebuilds kernel `k`'s adder tree around the times of its multiplications.
///
/// Walking `t0` forward from the earliest multiplication, an addition is placed at
/// `t0 + 1` whenever two unaccumulated values exist before that time and the layer
/// has a free PE; it consumes the two latest ones (higher id on ties), unless an
/// older operand would wait into a whole multiple of II, in which case that one
/// goes first with the latest. The kernel's existing addition nodes are reused in
/// creation order and the last one feeds the output writing.
pub fn rid_at(st: &mut SchedState, k: usize) -> Result<(), Stall> {
    let kernel = st.sdfg.kernels[k].clone();
    detach_tree(st, k);
    if kernel.muls.len() == 1 {
        st.sdfg.add_edge(kernel.muls[0], kernel.write);
        return Ok(());
    }
    let mut open: Vec<(u32, NodeId)> = Vec::with_capacity(kernel.muls.len());
    for &mul in &kernel.muls {
        open.push((st.schedule.time(mul).ok_or(Stall::AdderTree)?, mul));
    }
    let mut t0 = open.iter().map(|&(t, _)| t).min().expect("kernel has muls");
    let mut adds = kernel.adds.iter().copied();
    let mut blocked = 0u32;
    while open.len() > 1 {
        let t1 = t0 + 1;
        open.sort_unstable();
        let ready = open.iter().take_while(|&&(t, _)| t < t1).count();
        if ready >= 2 && st.pe_free(t1) > 0 {
            let ii = st.ii();
            let urgent = open[..ready].iter().position(|&(t, _)| ii > 1 && (t1 + 1 - t) % ii == 0);
            let b = open.remove(ready - 1).1;
            let a = match urgent {
                Some(u) if u < ready - 2 => open.remove(u).1,
                _ => open.remove(ready - 2).1,
            };
            let add = adds.next().expect("k-1 additions for k multiplications");
            st.sdfg.add_edge(a, add);
            st.sdfg.add_edge(b, add);
            st.place_op(add, t1);
            open.push((t1, add));
            blocked = 0;
        } else {
            if ready >= 2 {
                blocked += 1;
                if blocked >= st.ii() {
                    return Err(Stall::AdderTree);
                }
            }
            t0 += 1;
        }
    }
    st.sdfg.add_edge(open[0].1, kernel.write);
    Ok(())
}

/// Keeps kernel `k`'s fixed tree and places each addition as early as its operands
/// and the PE layers allow.
pub fn asap_fixed_tree(st: &mut SchedState, k: usize) -> Result<(), Stall> {
    let adds = st.sdfg.kernels[k].adds.clone();
    for add in adds {
        let mut ready = 0;
        for p in st.sdfg.preds(add) {
            ready = ready.max(st.schedule.time(p).ok_or(Stall::AdderTree)? + 1);
        }
        let at = (ready..ready + st.ii()).find(|&t| st.pe_free(t) > 0).ok_or(Stall::AdderTree)?;
        st.place_op(add, at);
    }
    Ok(())
}

/// Drops every edge into the kernel's additions and its writing.
fn detach_tree(st: &mut SchedState, k: usize) {
    let kernel = &st.sdfg.kernels[k];
    let mut targets: Vec<NodeId> = kernel.adds.clone();
    targets.push(kernel.write);
    st.sdfg.edges.retain(|e| !targets.contains(&e.dst));
}
