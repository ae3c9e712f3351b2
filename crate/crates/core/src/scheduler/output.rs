use crate::model::{NodeId, NodeKind};

use super::{SchedState, Stall};

/// Schedules every output writing exactly one cycle after its producer.
///
/// Kernels are visited by root time, then kernel index. When no output bus is
/// free one cycle after the root, a COP takes over as the writing's producer at
/// the first later time with a free PE and a free output bus in the following
/// cycle.
pub fn sched_writings(st: &mut SchedState) -> Result<(), Stall> {
    let mut order: Vec<(u32, usize, NodeId, NodeId)> = Vec::with_capacity(st.sdfg.kernels.len());
    for (k, kernel) in st.sdfg.kernels.iter().enumerate() {
        let w = kernel.write;
        let root = st.sdfg.preds(w).next().ok_or(Stall::OutputWriting)?;
        let t = st.schedule.time(root).ok_or(Stall::OutputWriting)?;
        order.push((t, k, root, w));
    }
    order.sort_unstable();
    let buses = st.cfg.output_buses();
    for (t2, k, root, w) in order {
        let t3 = t2 + 1;
        if st.schedule.tables.output[st.slot(t3)] < buses {
            st.place_write(w, t3);
            continue;
        }
        let at = (t3..t3 + st.ii())
            .find(|&tc| st.pe_free(tc) > 0 && st.schedule.tables.output[st.slot(tc + 1)] < buses)
            .ok_or(Stall::OutputWriting)?;
        let cop = st.new_node(NodeKind::Cop, Some(st.sdfg.kernels[k].kernel), None);
        st.sdfg.add_edge(root, cop);
        st.redirect(root, cop, w);
        st.place_op(cop, at);
        st.place_write(w, at + 1);
    }
    Ok(())
}
