use crate::construct::{InsertionState, Position};
use crate::error::{Error, Result};
use crate::solution::CyclicSolution;

/// The position where the current node belongs according to `label`.
///
/// From the current node, walk the label both ways past unvisited nodes to
/// the first visited node on each side; the target is the partial edge
/// between those two. For CVRP the walk stays on the current node's route
/// and the depot counts as visited, so a node with only the depot on both
/// sides opens a new route.
pub fn target_position(label: &CyclicSolution, state: &InsertionState<'_>) -> Result<Position> {
    let inst = state.instance();
    let current = state.current_node().ok_or(Error::NoCurrentNode)?;
    let mut visited = vec![false; inst.len()];
    for &v in state.routes().iter().flatten() {
        visited[v] = true;
    }
    let routes = label.routes(inst.kind());
    let (route, at) = routes
        .iter()
        .enumerate()
        .find_map(|(ri, r)| r.iter().position(|&v| v == current).map(|i| (ri, i)))
        .ok_or(Error::InconsistentPartial)?;
    let r = routes[route];
    let (a, b) = if inst.is_cvrp() {
        let back = r[..at].iter().rev().copied().find(|&v| visited[v]).unwrap_or(0);
        let fwd = r[at + 1..].iter().copied().find(|&v| visited[v]).unwrap_or(0);
        (back, fwd)
    } else {
        let n = r.len();
        let back = (1..n).map(|k| r[(at + n - k) % n]).find(|&v| visited[v]);
        let fwd = (1..n).map(|k| r[(at + k) % n]).find(|&v| visited[v]);
        match (back, fwd) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InconsistentPartial),
        }
    };
    if inst.is_cvrp() && a == 0 && b == 0 {
        return Ok(Position::NewRoute);
    }
    let positions = state.all_positions();
    let mut reversed = None;
    for &(pos, _) in &positions {
        if pos == Position::NewRoute {
            continue;
        }
        let ends = state.endpoints(pos)?;
        if ends == (a, b) {
            return Ok(pos);
        }
        if ends == (b, a) && reversed.is_none() {
            reversed = Some(pos);
        }
    }
    reversed.ok_or(Error::InconsistentPartial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_uniform_cvrp;
    use crate::geometry::Point;
    use crate::instance::Instance;

    fn line(n: usize) -> Instance {
        Instance::tsp("l", (0..n).map(|i| Point::new(i as f64, (i * i % 7) as f64)).collect()).unwrap()
    }

    #[test]
    fn worked_example() {
        // label (π1..π5) is nodes 0..5; partial (π1, π3), current π2,
        // unvisited {π4, π5}
        let inst = line(5);
        let label = CyclicSolution::new((0..5).collect());
        let mut st = InsertionState::from_partial(&inst, vec![vec![0, 2]], [1, 3, 4]).unwrap();
        st.set_current_node(1).unwrap();
        let pos = target_position(&label, &st).unwrap();
        assert_eq!(st.endpoints(pos).unwrap(), (0, 2));
    }

    #[test]
    fn missing_one_node() {
        let inst = line(8);
        let label = CyclicSolution::new(vec![3, 1, 4, 0, 5, 2, 6, 7]);
        for (k, &c) in label.order().iter().enumerate() {
            let partial: Vec<usize> = label.order().iter().copied().filter(|&v| v != c).collect();
            let mut st = InsertionState::from_partial(&inst, vec![partial], [c]).unwrap();
            st.set_current_node(c).unwrap();
            let pos = target_position(&label, &st).unwrap();
            let n = label.order().len();
            let expect = (label.order()[(k + n - 1) % n], label.order()[(k + 1) % n]);
            assert_eq!(st.endpoints(pos).unwrap(), expect);
        }
    }

    #[test]
    fn reversed_partial_is_accepted() {
        let inst = line(5);
        let label = CyclicSolution::new((0..5).collect());
        let mut st = InsertionState::from_partial(&inst, vec![vec![4, 3, 1, 0]], [2]).unwrap();
        st.set_current_node(2).unwrap();
        let pos = target_position(&label, &st).unwrap();
        assert_eq!(st.endpoints(pos).unwrap(), (3, 1));
    }

    #[test]
    fn inconsistent_partial_detected() {
        let inst = line(6);
        let label = CyclicSolution::new((0..6).collect());
        // 0 and 2 are not adjacent in this partial
        let mut st = InsertionState::from_partial(&inst, vec![vec![0, 3, 2, 4]], [1, 5]).unwrap();
        st.set_current_node(1).unwrap();
        assert!(matches!(target_position(&label, &st), Err(Error::InconsistentPartial)));
    }

    #[test]
    fn cvrp_rules() {
        let inst = gen_uniform_cvrp(6, 1, 30.0, &mut crate::rng::seeded(0)).pop().unwrap();
        let label = CyclicSolution::new(vec![1, 2, 0, 3, 0, 4, 5, 6]);
        // node 3 is alone on its label route
        let mut st = InsertionState::from_partial(&inst, vec![vec![1, 2], vec![4, 6]], [3, 5]).unwrap();
        st.set_current_node(3).unwrap();
        assert_eq!(target_position(&label, &st).unwrap(), Position::NewRoute);
        // node 5 sits between 4 and 6
        let mut st = InsertionState::from_partial(&inst, vec![vec![1, 2], vec![4, 6]], [3, 5]).unwrap();
        st.set_current_node(5).unwrap();
        assert_eq!(target_position(&label, &st).unwrap(), Position::Edge { route: 1, index: 1 });
        // node 1 goes before 2, on the depot leg
        let mut st = InsertionState::from_partial(&inst, vec![vec![2], vec![4, 5, 6]], [1, 3]).unwrap();
        st.set_current_node(1).unwrap();
        assert_eq!(target_position(&label, &st).unwrap(), Position::Edge { route: 0, index: 0 });
    }
}
