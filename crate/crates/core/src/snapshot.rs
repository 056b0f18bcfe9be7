//! Edge-list text form of an overlay graph.
//!
//! ```text
//! # nodes=3
//! a,b,liq_ab,liq_ba,alpha_ab,beta_ab,alpha_ba,beta_ba
//! 0,1,5,5,0.1,0,0.1,0
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a graph read back is
//! bit-identical in every balance and fee. Channel ids are reassigned in row
//! order.

use crate::error::{Error, Result};
use crate::overlay::{Direction, NodeId, OverlayGraph};

pub const EDGE_HEADER: &str = "a,b,liq_ab,liq_ba,alpha_ab,beta_ab,alpha_ba,beta_ba";

pub fn graph_to_csv(g: &OverlayGraph) -> String {
    let mut out = format!("# nodes={}\n{EDGE_HEADER}\n", g.node_count());
    for (_, c) in g.channels() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.endpoint_a.0,
            c.endpoint_b.0,
            c.liq_ab,
            c.liq_ba,
            c.fee_base_ab,
            c.fee_rate_ab,
            c.fee_base_ba,
            c.fee_rate_ba
        ));
    }
    out
}

pub fn graph_from_csv(text: &str) -> Result<OverlayGraph> {
    let mut nodes = None;
    let mut g: Option<OverlayGraph> = None;
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |m: String| Error::Parse { line: line_no, message: m };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("nodes=") {
                let n: usize = n.trim().parse().map_err(|_| bad(format!("bad node count {n:?}")))?;
                nodes = Some(n);
                g = Some(OverlayGraph::new(n));
            }
            continue;
        }
        if !header_seen {
            if line != EDGE_HEADER {
                return Err(bad(format!("expected header {EDGE_HEADER}")));
            }
            header_seen = true;
            continue;
        }
        let graph = g.as_mut().ok_or_else(|| bad("edge row before `# nodes=N`".into()))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(format!("expected 8 columns, got {}", cols.len())));
        }
        let node = |s: &str| s.parse::<u32>().map(NodeId).map_err(|_| bad(format!("bad node id {s:?}")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let (a, b) = (node(cols[0])?, node(cols[1])?);
        let (ab, ba) = (num(cols[2])?, num(cols[3])?);
        let id = graph.open_channel(a, b, ab, ba, 0.0).map_err(|e| bad(e.to_string()))?;
        let c = graph.channel_mut(id).expect("just opened");
        c.set_fees(Direction::AtoB, num(cols[4])?, num(cols[5])?);
        c.set_fees(Direction::BtoA, num(cols[6])?, num(cols[7])?);
    }
    let mut g = match (nodes, g) {
        (Some(_), Some(g)) => g,
        _ => return Err(Error::Parse { line: 1, message: "missing `# nodes=N` line".into() }),
    };
    g.onchain_op_count = 0;
    Ok(g)
}
