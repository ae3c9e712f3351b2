use crate::frontend::AssociationMatrix;
use crate::model::{NodeId, NodeKind};

use super::{SchedState, Stall};

/// Picks the next reading to put on an input bus at the current time slot.
///
/// With readings already at this slot, the one with the largest summed association
/// to them wins; on an empty slot the largest fan-out wins. Ties go to larger
/// fan-out, then lower node id.
pub fn aiba_select(unscheduled: &[NodeId], scheduled_at_t: &[NodeId], assoc: &AssociationMatrix) -> NodeId {
    assert!(!unscheduled.is_empty(), "no reading left to select");
    let score = |r: NodeId| -> u32 { scheduled_at_t.iter().map(|&s| assoc.get(r, s)).sum() };
    *unscheduled
        .iter()
        .max_by(|&&a, &&b| {
            score(a)
                .cmp(&score(b))
                .then(assoc.fanout(a).cmp(&assoc.fanout(b)))
                .then(b.cmp(&a))
        })
        .expect("non-empty")
}

/// Multicasts reading `r` (already on a bus at `t`) onto extra input buses so that
/// every fan-out multiplication can run at `t`.
///
/// Fan-out multiplications are split in node-id order into groups of at most one
/// column's worth of PEs; group 0 stays on `r`, each further group gets a clone.
/// Nothing is touched when the PEs or the extra buses are not available.
pub fn mul_ci(st: &mut SchedState, r: NodeId, t: u32) -> bool {
    let fanout = st.sdfg.fanout_muls(r);
    let rows = st.cfg.rows as usize;
    let groups = fanout.len().div_ceil(rows);
    if groups < 2 || fanout.len() as u32 > st.pe_free(t) {
        return false;
    }
    let m = st.slot(t);
    let extra = groups as u32 - 1;
    if st.schedule.tables.input[m] + extra > st.cfg.input_buses() {
        return false;
    }
    let channel = st.sdfg.node(r).channel;
    for group in fanout.chunks(rows).skip(1) {
        let clone = st.new_node(NodeKind::InputRead, None, channel);
        st.sdfg.nodes[clone.index()].clone_of = Some(r);
        for &mul in group {
            st.redirect(r, clone, mul);
        }
        st.place_read(clone, t);
    }
    for mul in fanout {
        st.place_op(mul, t);
    }
    st.schedule.multicast[r.index()] = true;
    true
}

/// Schedules the fan-out of `r` behind a chain of caching operations.
///
/// The first COP runs at `t` next to as many direct multiplications as the input
/// column and the PE layer allow; every later level runs one cycle after its COP,
/// either absorbing the rest or forwarding it to a further COP. At most `II` COPs
/// are chained; multiplications still left over stay unscheduled for
/// [`sched_remain_mults`]. Returns false, untouched, when no PE is free at `t`.
pub fn sched_with_caching(st: &mut SchedState, r: NodeId, t: u32) -> bool {
    let fanout = st.sdfg.fanout_muls(r);
    let rows = st.cfg.rows;
    let free = st.pe_free(t);
    if fanout.len() as u32 <= rows.min(free) {
        for mul in fanout {
            st.place_op(mul, t);
        }
        return true;
    }
    if free == 0 {
        return false;
    }

    // the COP itself sits in the reading's column, next to the direct multiplications
    let direct = (rows - 1).min(free - 1) as usize;
    let direct = direct.min(fanout.len());
    let channel = st.sdfg.node(r).channel;
    let cop = st.new_node(NodeKind::Cop, None, channel);
    st.sdfg.add_edge(r, cop);
    st.place_op(cop, t);
    for &mul in &fanout[..direct] {
        st.place_op(mul, t);
    }
    let mut rest: Vec<NodeId> = fanout[direct..].to_vec();
    for &mul in &rest {
        st.redirect(r, cop, mul);
    }
    st.schedule.cached[r.index()] = true;

    let mut feeder = cop;
    let mut cops = 1u32;
    let mut at = t + 1;
    while !rest.is_empty() {
        let free = st.pe_free(at);
        if rest.len() as u32 <= rows.min(free) {
            for &mul in &rest {
                st.place_op(mul, at);
            }
            break;
        }
        if cops < st.ii() && free >= 1 {
            let next = st.new_node(NodeKind::Cop, None, channel);
            st.sdfg.add_edge(feeder, next);
            st.place_op(next, at);
            let k = ((rows - 1).min(free - 1) as usize).min(rest.len());
            for &mul in &rest[..k] {
                st.place_op(mul, at);
            }
            rest.drain(..k);
            for &mul in &rest {
                st.redirect(feeder, next, mul);
            }
            feeder = next;
            cops += 1;
            at += 1;
        } else {
            let k = (rows.min(free) as usize).min(rest.len());
            for &mul in &rest[..k] {
                st.place_op(mul, at);
            }
            // the remainder keeps `feeder` as producer and is placed later
            break;
        }
    }
    true
}

/// Places every multiplication left unscheduled by a caching chain at the earliest
/// time after its producer with a free PE.
pub fn sched_remain_mults(st: &mut SchedState) -> Result<(), Stall> {
    let pending: Vec<NodeId> = st
        .sdfg
        .ids_of(NodeKind::Mul)
        .filter(|&v| st.schedule.time(v).is_none())
        .collect();
    for mul in pending {
        let producer = st.sdfg.preds(mul).next().ok_or(Stall::RemainingMuls)?;
        let ready = st.schedule.time(producer).ok_or(Stall::RemainingMuls)? + 1;
        let at = (ready..ready + st.ii()).find(|&t| st.pe_free(t) > 0).ok_or(Stall::RemainingMuls)?;
        st.place_op(mul, at);
    }
    Ok(())
}
