use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DestinationInfo, NavError, NavGraph, NodeId};
use crate::geom::Point3;
use crate::image::GrayImage;

/// Reads a map file; `dest` image paths are relative to the file's directory.
pub fn read_map(path: &Path) -> Result<NavGraph, NavError> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_map(&text, base)
}

/// Parses `node <id> <x> <y> <z>`, `edge <a> <b> [weight]` and
/// `dest <id> <name> <pgm_path>` lines. `#` starts a comment.
pub fn parse_map(text: &str, base_dir: &Path) -> Result<NavGraph, NavError> {
    let mut graph = NavGraph::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| NavError::MapParse {
            line: idx + 1,
            reason,
        };
        let words: Vec<&str> = line.split_whitespace().collect();
        let id = |i: usize| -> Result<NodeId, NavError> {
            words
                .get(i)
                .ok_or_else(|| bad("missing node id".into()))?
                .parse()
                .map_err(|_| bad(format!("bad node id '{}'", words[i])))
        };
        let num = |i: usize| -> Result<f64, NavError> {
            words
                .get(i)
                .ok_or_else(|| bad("missing number".into()))?
                .parse()
                .map_err(|_| bad(format!("bad number '{}'", words[i])))
        };
        match words[0] {
            "node" if words.len() == 5 => {
                graph.add_node(id(1)?, Point3::new(num(2)?, num(3)?, num(4)?))?;
            }
            "edge" if words.len() == 3 || words.len() == 4 => {
                let weight = if words.len() == 4 { Some(num(3)?) } else { None };
                graph.add_edge(id(1)?, id(2)?, weight)?;
            }
            "dest" if words.len() == 4 => {
                let image = GrayImage::read_pgm(&base_dir.join(words[3]))?;
                graph.set_destination(
                    id(1)?,
                    DestinationInfo {
                        name: words[2].to_string(),
                        image,
                    },
                )?;
            }
            other => return Err(bad(format!("unrecognized line '{other} ...' ({} fields)", words.len()))),
        }
    }
    Ok(graph)
}

/// Writes the map and one `dest_<id>.pgm` per destination next to it.
pub fn write_map(graph: &NavGraph, path: &Path) -> Result<(), NavError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut text = String::new();
    for (id, p) in graph.nodes() {
        writeln!(text, "node {id} {} {} {}", p.x, p.y, p.z).unwrap();
    }
    for (a, b, w) in graph.edges() {
        writeln!(text, "edge {a} {b} {w}").unwrap();
    }
    for (id, info) in graph.destinations() {
        let file = format!("dest_{id}.pgm");
        info.image.write_pgm(&dir.join(&file))?;
        writeln!(text, "dest {id} {} {file}", info.name).unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}
