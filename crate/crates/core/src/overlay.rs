//! Off-chain channel graph: directional liquidity, fee schedules, atomic
//! multi-hop payments and the on-chain channel lifecycle.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::routing::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub u32);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::AtoB => Direction::BtoA,
            Direction::BtoA => Direction::AtoB,
        }
    }
}

/// One traversal of a channel in a given direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Hop {
    pub channel: ChannelId,
    pub dir: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub endpoint_a: NodeId,
    pub endpoint_b: NodeId,
    pub liq_ab: f64,
    pub liq_ba: f64,
    pub fee_base_ab: f64,
    pub fee_base_ba: f64,
    pub fee_rate_ab: f64,
    pub fee_rate_ba: f64,
    pub opened_epoch: u64,
    pub capacity: f64,
    /// Cumulative forwarding fees earned by the sender side of each direction.
    pub earned_ab: f64,
    pub earned_ba: f64,
}

impl ChannelState {
    pub fn source(&self, dir: Direction) -> NodeId {
        match dir {
            Direction::AtoB => self.endpoint_a,
            Direction::BtoA => self.endpoint_b,
        }
    }

    pub fn target(&self, dir: Direction) -> NodeId {
        self.source(dir.reverse())
    }

    pub fn liquidity(&self, dir: Direction) -> f64 {
        match dir {
            Direction::AtoB => self.liq_ab,
            Direction::BtoA => self.liq_ba,
        }
    }

    fn liquidity_mut(&mut self, dir: Direction) -> &mut f64 {
        match dir {
            Direction::AtoB => &mut self.liq_ab,
            Direction::BtoA => &mut self.liq_ba,
        }
    }

    pub fn fee_base(&self, dir: Direction) -> f64 {
        match dir {
            Direction::AtoB => self.fee_base_ab,
            Direction::BtoA => self.fee_base_ba,
        }
    }

    pub fn fee_rate(&self, dir: Direction) -> f64 {
        match dir {
            Direction::AtoB => self.fee_rate_ab,
            Direction::BtoA => self.fee_rate_ba,
        }
    }

    /// `α + β·amount` for the given direction.
    pub fn hop_fee(&self, dir: Direction, amount: f64) -> f64 {
        self.fee_base(dir) + self.fee_rate(dir) * amount
    }

    pub fn earned(&self, dir: Direction) -> f64 {
        match dir {
            Direction::AtoB => self.earned_ab,
            Direction::BtoA => self.earned_ba,
        }
    }

    pub fn set_fees(&mut self, dir: Direction, base: f64, rate: f64) {
        match dir {
            Direction::AtoB => {
                self.fee_base_ab = base;
                self.fee_rate_ab = rate;
            }
            Direction::BtoA => {
                self.fee_base_ba = base;
                self.fee_rate_ba = rate;
            }
        }
    }

    /// Direction in which `node` is the sender, if it is an endpoint.
    pub fn direction_from(&self, node: NodeId) -> Option<Direction> {
        if node == self.endpoint_a {
            Some(Direction::AtoB)
        } else if node == self.endpoint_b {
            Some(Direction::BtoA)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaymentReceipt {
    /// Fees paid by the source on top of the delivered amount.
    pub total_fee: f64,
    /// Fee retained at each hop; the first hop is the source's own channel and
    /// carries no fee.
    pub per_hop_fees: Vec<f64>,
    /// Amount moved across each hop, source side first.
    pub forwarded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlayGraph {
    node_count: usize,
    channels: BTreeMap<ChannelId, ChannelState>,
    pairs: BTreeMap<(NodeId, NodeId), ChannelId>,
    adjacency: Vec<Vec<ChannelId>>,
    next_channel: u32,
    fee_revenue: Vec<f64>,
    pub epoch: u64,
    pub onchain_op_count: u64,
    pub onchain_fee_paid: f64,
}

fn pair_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl OverlayGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            adjacency: vec![Vec::new(); node_count],
            fee_revenue: vec![0.0; node_count],
            ..Self::default()
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count as u32).map(NodeId)
    }

    pub fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.node_count as u32);
        self.node_count += 1;
        self.adjacency.push(Vec::new());
        self.fee_revenue.push(0.0);
        id
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.node_count
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, id: ChannelId) -> Option<&ChannelState> {
        self.channels.get(&id)
    }

    pub fn channel_mut(&mut self, id: ChannelId) -> Option<&mut ChannelState> {
        self.channels.get_mut(&id)
    }

    /// Channels in id order.
    pub fn channels(&self) -> impl Iterator<Item = (ChannelId, &ChannelState)> {
        self.channels.iter().map(|(id, c)| (*id, c))
    }

    pub fn channel_between(&self, a: NodeId, b: NodeId) -> Option<ChannelId> {
        self.pairs.get(&pair_key(a, b)).copied()
    }

    /// Channels incident to `node`, in id order.
    pub fn incident(&self, node: NodeId) -> &[ChannelId] {
        self.adjacency.get(node.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Outgoing hops from `node` as `(hop, neighbour)`, in channel id order.
    pub fn out_hops(&self, node: NodeId) -> impl Iterator<Item = (Hop, NodeId)> + '_ {
        self.incident(node).iter().map(move |&id| {
            let c = &self.channels[&id];
            let dir = c.direction_from(node).expect("adjacency is consistent");
            (Hop { channel: id, dir }, c.target(dir))
        })
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.incident(node).len()
    }

    pub fn hop_state(&self, hop: Hop) -> Result<&ChannelState> {
        self.channels.get(&hop.channel).ok_or(Error::UnknownChannel(hop.channel))
    }

    pub fn fee_revenue(&self, node: NodeId) -> f64 {
        self.fee_revenue.get(node.index()).copied().unwrap_or(0.0)
    }

    pub fn total_capacity(&self) -> f64 {
        self.channels.values().map(|c| c.capacity).sum()
    }

    /// Opens a channel funded by both endpoints and books one on-chain operation.
    pub fn open_channel(
        &mut self,
        a: NodeId,
        b: NodeId,
        fund_a: f64,
        fund_b: f64,
        onchain_fee: f64,
    ) -> Result<ChannelId> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(Error::SelfChannel(a));
        }
        if self.pairs.contains_key(&pair_key(a, b)) {
            return Err(Error::DuplicateChannel(a, b));
        }
        if !(fund_a >= 0.0 && fund_b >= 0.0 && fund_a + fund_b > 0.0) {
            return Err(Error::ZeroFunding);
        }
        let id = ChannelId(self.next_channel);
        self.next_channel += 1;
        self.channels.insert(
            id,
            ChannelState {
                endpoint_a: a,
                endpoint_b: b,
                liq_ab: fund_a,
                liq_ba: fund_b,
                fee_base_ab: 0.0,
                fee_base_ba: 0.0,
                fee_rate_ab: 0.0,
                fee_rate_ba: 0.0,
                opened_epoch: self.epoch,
                capacity: fund_a + fund_b,
                earned_ab: 0.0,
                earned_ba: 0.0,
            },
        );
        self.pairs.insert(pair_key(a, b), id);
        for n in [a, b] {
            let adj = &mut self.adjacency[n.index()];
            let pos = adj.partition_point(|&c| c < id);
            adj.insert(pos, id);
        }
        self.onchain_op_count += 1;
        self.onchain_fee_paid += onchain_fee;
        Ok(id)
    }

    /// Closes a channel, returning the settled `(ℓ_ab, ℓ_ba)` balances.
    pub fn close_channel(&mut self, id: ChannelId, onchain_fee: f64) -> Result<(f64, f64)> {
        let c = self.channels.remove(&id).ok_or(Error::UnknownChannel(id))?;
        self.pairs.remove(&pair_key(c.endpoint_a, c.endpoint_b));
        for n in [c.endpoint_a, c.endpoint_b] {
            self.adjacency[n.index()].retain(|&x| x != id);
        }
        self.onchain_op_count += 1;
        self.onchain_fee_paid += onchain_fee;
        Ok((c.liq_ab, c.liq_ba))
    }

    /// Adds liquidity to both directions of a channel (an on-chain splice).
    pub fn splice_in(&mut self, id: ChannelId, add_ab: f64, add_ba: f64) -> Result<()> {
        let c = self.channels.get_mut(&id).ok_or(Error::UnknownChannel(id))?;
        c.liq_ab += add_ab;
        c.liq_ba += add_ba;
        c.capacity += add_ab + add_ba;
        Ok(())
    }

    /// Amount each hop must carry so that the destination receives `amount`.
    ///
    /// Computed destination-backward: the last hop carries `amount` and every
    /// earlier hop additionally carries the fee charged by the node that sends
    /// over the following hop.
    pub fn forward_amounts(&self, hops: &[Hop], amount: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; hops.len()];
        let mut carried = amount;
        for i in (0..hops.len()).rev() {
            out[i] = carried;
            if i > 0 {
                let c = self.hop_state(hops[i])?;
                carried += c.hop_fee(hops[i].dir, carried);
            }
        }
        Ok(out)
    }

    /// Moves `amount` from source to destination along `path`, all-or-nothing.
    ///
    /// Every hop must hold at least its forward amount plus `margin`. On
    /// failure the graph is left untouched.
    pub fn execute_payment(&mut self, path: &Path, amount: f64, margin: f64) -> Result<PaymentReceipt> {
        if !(amount > 0.0) {
            return Err(Error::InvalidPath(format!("amount must be positive, got {amount}")));
        }
        path.validate(self)?;
        let forwarded = self.forward_amounts(&path.hops, amount)?;
        for (i, (hop, need)) in path.hops.iter().zip(&forwarded).enumerate() {
            let available = self.hop_state(*hop)?.liquidity(hop.dir);
            if available < need + margin {
                return Err(Error::AtomicityFailure { hop: i, required: need + margin, available });
            }
        }

        let mut per_hop_fees = vec![0.0; path.hops.len()];
        for i in 1..path.hops.len() {
            per_hop_fees[i] = forwarded[i - 1] - forwarded[i];
        }
        for (i, (hop, moved)) in path.hops.iter().zip(&forwarded).enumerate() {
            let c = self.channels.get_mut(&hop.channel).expect("validated above");
            *c.liquidity_mut(hop.dir) -= moved;
            *c.liquidity_mut(hop.dir.reverse()) += moved;
            if i > 0 {
                let fee = per_hop_fees[i];
                match hop.dir {
                    Direction::AtoB => c.earned_ab += fee,
                    Direction::BtoA => c.earned_ba += fee,
                }
                let sender = c.source(hop.dir);
                self.fee_revenue[sender.index()] += fee;
            }
        }
        let total_fee = forwarded.first().map_or(0.0, |first| first - amount);
        Ok(PaymentReceipt { total_fee, per_hop_fees, forwarded })
    }

    /// Sum of `node`'s spendable balances over its channels.
    pub fn outbound_liquidity(&self, node: NodeId) -> f64 {
        self.incident(node)
            .iter()
            .map(|id| {
                let c = &self.channels[id];
                c.liquidity(c.direction_from(node).expect("incident"))
            })
            .sum()
    }

    pub fn total_outbound(&self) -> f64 {
        self.channels.values().map(|c| c.liq_ab + c.liq_ba).sum()
    }

    /// Fraction of system-wide outbound liquidity held by `node`.
    pub fn liquidity_share(&self, node: NodeId) -> Result<f64> {
        self.check_node(node)?;
        let total = self.total_outbound();
        if !(total > 0.0) {
            return Err(Error::NoLiquidity);
        }
        Ok(self.outbound_liquidity(node) / total)
    }

    /// Liquidity share of every node, indexed by node id.
    pub fn liquidity_shares(&self) -> Result<Vec<f64>> {
        let total = self.total_outbound();
        if !(total > 0.0) {
            return Err(Error::NoLiquidity);
        }
        Ok(self.outbound_by_node().into_iter().map(|l| l / total).collect())
    }

    pub fn outbound_by_node(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count];
        for c in self.channels.values() {
            out[c.endpoint_a.index()] += c.liq_ab;
            out[c.endpoint_b.index()] += c.liq_ba;
        }
        out
    }
}

/// Whether on-chain enforcement is worth its fee: `v ≥ f_chain`.
pub fn enforcement_feasible(in_flight_value: f64, chain_fee: f64) -> bool {
    in_flight_value >= chain_fee
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn hop(g: &OverlayGraph, from: u32, to: u32) -> Hop {
        let id = g.channel_between(n(from), n(to)).unwrap();
        let dir = g.channel(id).unwrap().direction_from(n(from)).unwrap();
        Hop { channel: id, dir }
    }

    #[test]
    fn open_single_funder() {
        let mut g = OverlayGraph::new(2);
        let id = g.open_channel(n(0), n(1), 100.0, 0.0, 1.0).unwrap();
        let c = g.channel(id).unwrap();
        assert_eq!((c.liq_ab, c.liq_ba, c.capacity), (100.0, 0.0, 100.0));
        assert_eq!(g.onchain_op_count, 1);
        assert_eq!(g.onchain_fee_paid, 1.0);
    }

    #[test]
    fn open_rejections() {
        let mut g = OverlayGraph::new(3);
        assert_eq!(g.open_channel(n(0), n(0), 1.0, 1.0, 0.0), Err(Error::SelfChannel(n(0))));
        g.open_channel(n(0), n(1), 1.0, 1.0, 0.0).unwrap();
        assert_eq!(g.open_channel(n(1), n(0), 1.0, 1.0, 0.0), Err(Error::DuplicateChannel(n(1), n(0))));
        assert_eq!(g.open_channel(n(1), n(2), 0.0, 0.0, 0.0), Err(Error::ZeroFunding));
        assert_eq!(g.open_channel(n(1), n(7), 1.0, 0.0, 0.0), Err(Error::UnknownNode(n(7))));
        assert_eq!(g.onchain_op_count, 1);
    }

    #[test]
    fn close_settles_balances() {
        let mut g = OverlayGraph::new(2);
        let id = g.open_channel(n(0), n(1), 100.0, 0.0, 1.0).unwrap();
        assert_eq!(g.close_channel(id, 1.0).unwrap(), (100.0, 0.0));
        assert_eq!(g.channel_count(), 0);
        assert_eq!(g.onchain_op_count, 2);
        assert_eq!(g.close_channel(id, 1.0), Err(Error::UnknownChannel(id)));

        let id = g.open_channel(n(0), n(1), 100.0, 0.0, 1.0).unwrap();
        let path = Path::new(n(0), n(1), vec![hop(&g, 0, 1)]);
        g.execute_payment(&path, 30.0, 0.0).unwrap();
        assert_eq!(g.close_channel(id, 1.0).unwrap(), (70.0, 30.0));
    }

    #[test]
    fn enforcement_boundary() {
        assert!(!enforcement_feasible(50.0, 60.0));
        assert!(enforcement_feasible(50.0, 50.0));
        assert!(enforcement_feasible(100.0, 0.2));
    }

    #[test]
    fn single_hop_fee_free() {
        let mut g = OverlayGraph::new(2);
        let id = g.open_channel(n(0), n(1), 100.0, 5.0, 0.0).unwrap();
        let path = Path::new(n(0), n(1), vec![hop(&g, 0, 1)]);
        let r = g.execute_payment(&path, 30.0, 0.0).unwrap();
        assert_eq!(r.total_fee, 0.0);
        let c = g.channel(id).unwrap();
        assert_eq!((c.liq_ab, c.liq_ba), (70.0, 35.0));
    }

    #[test]
    fn two_hop_fees_accumulate_backward() {
        let mut g = OverlayGraph::new(3);
        let c01 = g.open_channel(n(0), n(1), 100.0, 0.0, 0.0).unwrap();
        let c12 = g.open_channel(n(1), n(2), 100.0, 0.0, 0.0).unwrap();
        g.channel_mut(c01).unwrap().set_fees(Direction::AtoB, 1.0, 0.0);
        g.channel_mut(c12).unwrap().set_fees(Direction::AtoB, 1.0, 0.0);
        let path = Path::new(n(0), n(2), vec![hop(&g, 0, 1), hop(&g, 1, 2)]);
        let r = g.execute_payment(&path, 10.0, 0.0).unwrap();
        // Destination gets 10, the first hop carries 10 plus the relay's fee.
        assert_eq!(r.forwarded, vec![11.0, 10.0]);
        assert_eq!(r.per_hop_fees, vec![0.0, 1.0]);
        assert_eq!(r.total_fee, 1.0);
        assert_eq!(g.channel(c12).unwrap().liq_ba, 10.0);
        assert_eq!(g.channel(c01).unwrap().liq_ab, 89.0);
        assert_eq!(g.fee_revenue(n(1)), 1.0);
        assert_eq!(g.channel(c12).unwrap().earned_ab, 1.0);
    }

    #[test]
    fn failed_payment_leaves_graph_untouched() {
        let mut g = OverlayGraph::new(3);
        g.open_channel(n(0), n(1), 100.0, 0.0, 0.0).unwrap();
        g.open_channel(n(1), n(2), 5.0, 0.0, 0.0).unwrap();
        let before = g.clone();
        let path = Path::new(n(0), n(2), vec![hop(&g, 0, 1), hop(&g, 1, 2)]);
        let err = g.execute_payment(&path, 10.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::AtomicityFailure { hop: 1, .. }));
        assert_eq!(g, before);
    }

    #[test]
    fn empty_path_between_distinct_nodes_is_rejected() {
        let mut g = OverlayGraph::new(2);
        let path = Path::new(n(0), n(1), vec![]);
        assert!(matches!(g.execute_payment(&path, 1.0, 0.0), Err(Error::InvalidPath(_))));
    }

    #[test]
    fn share_examples() {
        let mut g = OverlayGraph::new(2);
        g.open_channel(n(0), n(1), 100.0, 0.0, 0.0).unwrap();
        assert_eq!(g.liquidity_share(n(0)).unwrap(), 1.0);
        assert_eq!(g.liquidity_share(n(1)).unwrap(), 0.0);

        let mut g = OverlayGraph::new(2);
        g.open_channel(n(0), n(1), 50.0, 50.0, 0.0).unwrap();
        assert_eq!(g.liquidity_share(n(0)).unwrap(), 0.5);

        let mut g = OverlayGraph::new(4);
        g.open_channel(n(0), n(3), 10.0, 0.0, 0.0).unwrap();
        g.open_channel(n(1), n(3), 30.0, 0.0, 0.0).unwrap();
        g.open_channel(n(2), n(3), 60.0, 0.0, 0.0).unwrap();
        let shares = g.liquidity_shares().unwrap();
        assert_relative_eq!(shares[0], 0.1);
        assert_relative_eq!(shares[1], 0.3);
        assert_relative_eq!(shares[2], 0.6);

        assert_eq!(OverlayGraph::new(3).liquidity_share(n(0)), Err(Error::NoLiquidity));
    }

    fn ring(balances: &[(f64, f64)]) -> OverlayGraph {
        let k = balances.len() as u32;
        let mut g = OverlayGraph::new(k as usize);
        for (i, &(ab, ba)) in balances.iter().enumerate() {
            let i = i as u32;
            let id = g.open_channel(n(i), n((i + 1) % k), ab, ba, 0.0).unwrap();
            g.channel_mut(id).unwrap().set_fees(Direction::AtoB, 0.1, 0.01);
            g.channel_mut(id).unwrap().set_fees(Direction::BtoA, 0.2, 0.0);
        }
        g
    }

    proptest! {
        #[test]
        fn payments_conserve_capacity(
            balances in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 4..7),
            payments in proptest::collection::vec((0usize..7, 0usize..7, 0.1f64..20.0), 1..30),
        ) {
            let mut g = ring(&balances);
            let caps: Vec<f64> = g.channels().map(|(_, c)| c.capacity).collect();
            let k = balances.len();
            for (s, hops, amount) in payments {
                let s = s % k;
                let len = 1 + hops % (k - 1);
                let path_hops: Vec<Hop> = (0..len).map(|j| hop(&g, ((s + j) % k) as u32, ((s + j + 1) % k) as u32)).collect();
                let path = Path::new(n(s as u32), n(((s + len) % k) as u32), path_hops);
                let before = g.clone();
                match g.execute_payment(&path, amount, 0.0) {
                    Ok(_) => {}
                    Err(_) => prop_assert_eq!(&g, &before),
                }
                for ((_, c), cap) in g.channels().zip(&caps) {
                    prop_assert!((c.liq_ab + c.liq_ba - cap).abs() < 1e-9);
                    prop_assert!(c.liq_ab >= 0.0 && c.liq_ba >= 0.0);
                }
            }
            let total: f64 = g.liquidity_shares().unwrap().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
