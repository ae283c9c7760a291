//! The `EUC_2D` subset of the TSPLIB / CVRPLIB text format.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::instance::Instance;

#[derive(Default)]
struct Parsed {
    header: HashMap<String, String>,
    coords: Option<Vec<(usize, Point)>>,
    demands: Option<Vec<(usize, f64)>>,
    depots: Option<Vec<usize>>,
}

#[derive(Clone, Copy)]
enum Section {
    None,
    Coords,
    Demands,
    Depots,
    Skip,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedSection(msg.into())
}

fn parse_id(tok: &str, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| malformed(format!("bad {what} node id {tok:?}")))
}

fn parse_num(tok: &str, what: &str) -> Result<f64> {
    tok.parse().map_err(|_| malformed(format!("bad {what} value {tok:?}")))
}

fn parse(text: &str) -> Result<Parsed> {
    let mut out = Parsed::default();
    let mut section = Section::None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        let first = line.split_whitespace().next().unwrap_or("");
        let keyword = first.trim_end_matches(':');
        if keyword.ends_with("_SECTION") {
            section = match keyword {
                "NODE_COORD_SECTION" => Section::Coords,
                "DEMAND_SECTION" => Section::Demands,
                "DEPOT_SECTION" => Section::Depots,
                _ => Section::Skip,
            };
            match section {
                Section::Coords => out.coords = Some(Vec::new()),
                Section::Demands => out.demands = Some(Vec::new()),
                Section::Depots => out.depots = Some(Vec::new()),
                _ => {}
            }
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            if key.trim().chars().all(|c| c.is_ascii_uppercase() || c == '_') && !key.trim().is_empty() {
                out.header.insert(key.trim().to_string(), value.trim().to_string());
                section = Section::None;
                continue;
            }
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Coords => {
                if toks.len() < 3 {
                    return Err(malformed(format!("coordinate line {line:?}")));
                }
                let id = parse_id(toks[0], "coordinate")?;
                let p = Point::new(parse_num(toks[1], "x")?, parse_num(toks[2], "y")?);
                out.coords.as_mut().unwrap().push((id, p));
            }
            Section::Demands => {
                if toks.len() < 2 {
                    return Err(malformed(format!("demand line {line:?}")));
                }
                let id = parse_id(toks[0], "demand")?;
                out.demands.as_mut().unwrap().push((id, parse_num(toks[1], "demand")?));
            }
            Section::Depots => {
                for t in toks {
                    let v: i64 = t.parse().map_err(|_| malformed(format!("bad depot entry {t:?}")))?;
                    if v >= 1 {
                        out.depots.as_mut().unwrap().push(v as usize);
                    }
                }
            }
            Section::Skip => {}
            Section::None => return Err(malformed(format!("unexpected line {line:?}"))),
        }
    }
    Ok(out)
}

fn header_field<'a>(p: &'a Parsed, key: &str) -> Option<&'a str> {
    p.header.get(key).map(String::as_str)
}

/// Coordinates ordered by node id, checked against `DIMENSION`.
fn coords_by_id(p: &Parsed) -> Result<Vec<Point>> {
    match header_field(p, "EDGE_WEIGHT_TYPE") {
        Some("EUC_2D") => {}
        Some(other) => return Err(Error::UnsupportedEdgeWeightType(other.to_string())),
        None => return Err(malformed("missing EDGE_WEIGHT_TYPE")),
    }
    let dim: usize = header_field(p, "DIMENSION")
        .ok_or_else(|| malformed("missing DIMENSION"))?
        .parse()
        .map_err(|_| malformed("bad DIMENSION"))?;
    let entries = p.coords.as_ref().ok_or_else(|| malformed("missing NODE_COORD_SECTION"))?;
    if entries.len() != dim {
        return Err(malformed(format!("DIMENSION {dim} but {} coordinates", entries.len())));
    }
    let mut coords = vec![None; dim];
    for &(id, pt) in entries {
        if id == 0 || id > dim || coords[id - 1].replace(pt).is_some() {
            return Err(malformed(format!("node id {id} out of range or repeated")));
        }
    }
    Ok(coords.into_iter().map(Option::unwrap).collect())
}

fn check_type(p: &Parsed, expected: &str) -> Result<()> {
    match header_field(p, "TYPE") {
        Some(t) if t == expected => Ok(()),
        Some(t) => Err(malformed(format!("TYPE {t}, expected {expected}"))),
        None => Err(malformed("missing TYPE")),
    }
}

/// Parses a symmetric `EUC_2D` TSP file. Coordinates are kept unrounded.
pub fn parse_tsplib(text: &str) -> Result<Instance> {
    let p = parse(text)?;
    check_type(&p, "TSP")?;
    let coords = coords_by_id(&p)?;
    Instance::tsp(header_field(&p, "NAME").unwrap_or_default(), coords)
}

/// Parses an `EUC_2D` CVRP file. The depot becomes node 0; the other nodes
/// keep their file order.
pub fn parse_cvrplib(text: &str) -> Result<Instance> {
    let p = parse(text)?;
    check_type(&p, "CVRP")?;
    let coords = coords_by_id(&p)?;
    let capacity: f64 = header_field(&p, "CAPACITY")
        .ok_or_else(|| malformed("missing CAPACITY"))?
        .parse()
        .map_err(|_| malformed("bad CAPACITY"))?;
    let entries = p.demands.as_ref().ok_or_else(|| malformed("missing DEMAND_SECTION"))?;
    let mut demands = vec![None; coords.len()];
    for &(id, q) in entries {
        if id == 0 || id > coords.len() {
            return Err(malformed(format!("demand for unknown node {id}")));
        }
        demands[id - 1] = Some(q);
    }
    let depot = match p.depots.as_deref() {
        Some([d, ..]) if *d <= coords.len() => d - 1,
        Some([d, ..]) => return Err(malformed(format!("depot {d} out of range"))),
        _ => return Err(malformed("missing DEPOT_SECTION")),
    };
    let mut demands: Vec<f64> = demands
        .into_iter()
        .enumerate()
        .map(|(i, q)| q.ok_or(Error::MissingDemand(i + 1)))
        .collect::<Result<_>>()?;
    if demands[depot] != 0.0 {
        log::warn!("depot demand {} normalized to 0", demands[depot]);
        demands[depot] = 0.0;
    }
    let order: Vec<usize> = std::iter::once(depot).chain((0..coords.len()).filter(|&i| i != depot)).collect();
    Instance::cvrp(
        header_field(&p, "NAME").unwrap_or_default(),
        order.iter().map(|&i| coords[i]).collect(),
        order.iter().map(|&i| demands[i]).collect(),
        capacity,
    )
}

/// Writes an instance in the same subset (depot as node 1 for CVRP).
pub fn write_tsplib(inst: &Instance) -> String {
    let mut s = String::new();
    let kind = if inst.is_cvrp() { "CVRP" } else { "TSP" };
    let _ = writeln!(s, "NAME : {}", inst.name());
    let _ = writeln!(s, "TYPE : {kind}");
    let _ = writeln!(s, "DIMENSION : {}", inst.len());
    let _ = writeln!(s, "EDGE_WEIGHT_TYPE : EUC_2D");
    if inst.is_cvrp() {
        let _ = writeln!(s, "CAPACITY : {}", inst.capacity());
    }
    s.push_str("NODE_COORD_SECTION\n");
    for (i, p) in inst.coords().iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?}", i + 1, p.x, p.y);
    }
    if inst.is_cvrp() {
        s.push_str("DEMAND_SECTION\n");
        for (i, q) in inst.demands().iter().enumerate() {
            let _ = writeln!(s, "{} {}", i + 1, q);
        }
        s.push_str("DEPOT_SECTION\n 1\n -1\n");
    }
    s.push_str("EOF\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL_TSP: &str = "NAME : tiny\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\n\
        NODE_COORD_SECTION\n1 0 0\n2 3 0\n3 0 4\nEOF\n";

    #[test]
    fn parses_tsp() {
        let inst = parse_tsplib(SMALL_TSP).unwrap();
        assert_eq!(inst.name(), "tiny");
        assert_eq!(inst.len(), 3);
        assert_eq!(inst.coord(2), Point::new(0.0, 4.0));
    }

    #[test]
    fn dimension_mismatch() {
        let bad = SMALL_TSP.replace("DIMENSION : 3", "DIMENSION : 4");
        assert!(matches!(parse_tsplib(&bad), Err(Error::MalformedSection(_))));
        let missing = SMALL_TSP.replace("NODE_COORD_SECTION\n1 0 0\n2 3 0\n3 0 4\n", "");
        assert!(matches!(parse_tsplib(&missing), Err(Error::MalformedSection(_))));
    }

    #[test]
    fn explicit_weights_rejected() {
        let text = "NAME : m\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EXPLICIT\n\
            EDGE_WEIGHT_FORMAT : FULL_MATRIX\nEDGE_WEIGHT_SECTION\n0 1 2\n1 0 3\n2 3 0\nEOF\n";
        assert!(matches!(parse_tsplib(text), Err(Error::UnsupportedEdgeWeightType(t)) if t == "EXPLICIT"));
    }

    const SMALL_VRP: &str = "NAME : v\nTYPE : CVRP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\n\
        NODE_COORD_SECTION\n1 5 5\n2 0 0\n3 9 9\nDEMAND_SECTION\n1 0\n2 4\n3 6\nDEPOT_SECTION\n 1\n -1\nEOF\n";

    #[test]
    fn parses_cvrp() {
        let inst = parse_cvrplib(SMALL_VRP).unwrap();
        assert_eq!(inst.customer_count(), 2);
        assert_eq!(inst.coord(0), Point::new(5.0, 5.0));
        assert_eq!(inst.demands(), &[0.0, 4.0, 6.0]);
        assert_eq!(inst.capacity(), 10.0);
    }

    #[test]
    fn cvrp_errors_and_normalization() {
        let no_cap = SMALL_VRP.replace("CAPACITY : 10\n", "");
        assert!(matches!(parse_cvrplib(&no_cap), Err(Error::MalformedSection(_))));
        let no_dem = SMALL_VRP.replace("3 6\n", "");
        assert!(matches!(parse_cvrplib(&no_dem), Err(Error::MissingDemand(3))));
        let depot_dem = SMALL_VRP.replace("DEMAND_SECTION\n1 0", "DEMAND_SECTION\n1 3");
        assert_eq!(parse_cvrplib(&depot_dem).unwrap().demand(0), 0.0);
        let depot2 = SMALL_VRP.replace("DEPOT_SECTION\n 1\n", "DEPOT_SECTION\n 3\n").replace("3 6", "3 0").replace("1 0\n", "1 6\n");
        let inst = parse_cvrplib(&depot2).unwrap();
        assert_eq!(inst.coord(0), Point::new(9.0, 9.0));
        assert_eq!(inst.coord(1), Point::new(5.0, 5.0));
        assert_eq!(inst.demands(), &[0.0, 6.0, 4.0]);
    }

    #[test]
    fn write_then_parse() {
        let inst = parse_cvrplib(SMALL_VRP).unwrap();
        assert_eq!(parse_cvrplib(&write_tsplib(&inst)).unwrap(), inst);
        let t = parse_tsplib(SMALL_TSP).unwrap();
        assert_eq!(parse_tsplib(&write_tsplib(&t)).unwrap(), t);
    }
}
