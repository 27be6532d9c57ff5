//! Bundled test networks.
//!
//! The IEEE 14- and 57-bus systems in MATPOWER form, and four small JSON
//! networks (3 to 6 buses) with unequal reactances so that no two placements
//! score the same by symmetry.

use crate::error::Result;
use crate::network::{parse_case, CaseFormat, NetworkCase};

pub const CASE14_M: &str = include_str!("../data/case14.m");
pub const CASE57_M: &str = include_str!("../data/case57.m");
pub const PATH3_JSON: &str = include_str!("../data/path3.json");
pub const RING4_JSON: &str = include_str!("../data/ring4.json");
pub const RADIAL5_JSON: &str = include_str!("../data/radial5.json");
pub const MESH6_JSON: &str = include_str!("../data/mesh6.json");

fn parsed(source: &str, format: CaseFormat) -> NetworkCase {
    parse_case(source, format).expect("bundled case parses")
}

pub fn ieee14() -> NetworkCase {
    parsed(CASE14_M, CaseFormat::MatpowerSubset)
}

pub fn ieee57() -> NetworkCase {
    parsed(CASE57_M, CaseFormat::MatpowerSubset)
}

pub fn path3() -> NetworkCase {
    parsed(PATH3_JSON, CaseFormat::Json)
}

pub fn ring4() -> NetworkCase {
    parsed(RING4_JSON, CaseFormat::Json)
}

pub fn radial5() -> NetworkCase {
    parsed(RADIAL5_JSON, CaseFormat::Json)
}

pub fn mesh6() -> NetworkCase {
    parsed(MESH6_JSON, CaseFormat::Json)
}

/// The four small networks, smallest first.
pub fn small_cases() -> Vec<(&'static str, NetworkCase)> {
    vec![
        ("path3", path3()),
        ("ring4", ring4()),
        ("radial5", radial5()),
        ("mesh6", mesh6()),
    ]
}

/// A bundled case by name: `ieee14`, `ieee57`, `path3`, `ring4`, `radial5` or `mesh6`.
pub fn by_name(name: &str) -> Option<Result<NetworkCase>> {
    let (source, format) = match name {
        "ieee14" | "case14" => (CASE14_M, CaseFormat::MatpowerSubset),
        "ieee57" | "case57" => (CASE57_M, CaseFormat::MatpowerSubset),
        "path3" => (PATH3_JSON, CaseFormat::Json),
        "ring4" => (RING4_JSON, CaseFormat::Json),
        "radial5" => (RADIAL5_JSON, CaseFormat::Json),
        "mesh6" => (MESH6_JSON, CaseFormat::Json),
        _ => return None,
    };
    Some(parse_case(source, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_cases_parse() {
        let c14 = ieee14();
        assert_eq!((c14.buses.len(), c14.branches.len(), c14.slack), (14, 20, 1));
        let c57 = ieee57();
        assert_eq!((c57.buses.len(), c57.branches.len(), c57.slack), (57, 80, 1));
        for (name, case) in small_cases() {
            assert!(case.buses.len() <= 6, "{name}");
            assert_eq!(case.components(), 1, "{name}");
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn injections_are_in_per_unit() {
        let c14 = ieee14();
        // Bus 2: PG 40 MW, PD 21.7 MW. Bus 3: PG 0, PD 94.2 MW.
        assert!((c14.bus(2).unwrap().injection_mean - 0.183).abs() < 1e-12);
        let b3 = c14.bus(3).unwrap();
        assert!((b3.injection_mean + 0.942).abs() < 1e-12);
        assert!((b3.injection_std - 0.1 * b3.injection_mean.abs()).abs() < 1e-12);
    }
}
