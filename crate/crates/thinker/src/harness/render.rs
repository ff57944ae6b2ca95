use crate::error::{Error, Result};
use serde_json::Value;
use std::collections::BTreeMap;

/// Render a tree snapshot (the JSON emitted by `Tree::snapshot`) as an
/// indented text listing: one line per node with its incoming action,
/// predicted reward and value, rollout return, and visit count. Children
/// are ordered by action index; the root and current nodes are marked.
pub fn render_tree_ascii(snapshot: &Value) -> Result<String> {
    let root = snapshot
        .get("root")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::BadSnapshot("missing root".into()))?;
    let cur = snapshot
        .get("cur")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::BadSnapshot("missing cur".into()))?;
    let nodes = snapshot
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::BadSnapshot("missing nodes".into()))?;
    let mut by_id: BTreeMap<u64, &Value> = BTreeMap::new();
    for node in nodes {
        let id = node
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::BadSnapshot("node without id".into()))?;
        by_id.insert(id, node);
    }
    if !by_id.contains_key(&root) {
        return Err(Error::BadSnapshot("root id not among nodes".into()));
    }

    fn field_f64(node: &Value, key: &str) -> Result<f64> {
        node.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::BadSnapshot(format!("node missing `{key}`")))
    }

    fn write_node(
        out: &mut String,
        by_id: &BTreeMap<u64, &Value>,
        id: u64,
        depth: usize,
        root: u64,
        cur: u64,
    ) -> Result<()> {
        let node = by_id
            .get(&id)
            .ok_or_else(|| Error::BadSnapshot(format!("dangling child id {id}")))?;
        let action = node
            .get("action")
            .and_then(Value::as_u64)
            .map(|a| format!("a={a}"))
            .unwrap_or_else(|| "-".to_string());
        let reward = field_f64(node, "reward")?;
        let value = field_f64(node, "value")?;
        let g = field_f64(node, "rollout_return")?;
        let visits = node.get("visits").and_then(Value::as_u64).unwrap_or(0);
        let mut markers = String::new();
        if id == root {
            markers.push_str(" [root]");
        }
        if id == cur {
            markers.push_str(" [cur]");
        }
        let absorbing = node
            .get("absorbing")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        if absorbing {
            markers.push_str(" [absorbing]");
        }
        out.push_str(&format!(
            "{:indent$}{action} r={reward:.4} v={value:.4} g={g:.4} n={visits}{markers}\n",
            "",
            indent = depth * 2,
        ));
        let children = node
            .get("children")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        let mut ordered: Vec<(usize, u64)> = children
            .iter()
            .filter_map(|(a, v)| Some((a.parse::<usize>().ok()?, v.as_u64()?)))
            .collect();
        ordered.sort();
        for (_, child) in ordered {
            write_node(out, by_id, child, depth + 1, root, cur)?;
        }
        Ok(())
    }

    let mut out = String::new();
    write_node(&mut out, &by_id, root, 0, root, cur)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HiddenState, OutputStats};
    use crate::tree::Tree;

    fn hidden() -> HiddenState {
        HiddenState::Learned {
            stationary: vec![0.0],
            nonstationary: vec![0.0],
            predicted_observation: None,
        }
    }

    fn stats(reward: f64, value: f64) -> OutputStats {
        OutputStats {
            reward,
            done_prob: 0.0,
            value,
            policy: vec![0.5, 0.5],
        }
    }

    #[test]
    fn single_root_renders_one_line() {
        let tree = Tree::new((hidden(), stats(0.0, 1.0)), 0.9, 2, 5);
        let text = render_tree_ascii(&tree.snapshot()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("[root]"));
        assert!(text.contains("[cur]"));
    }

    #[test]
    fn three_node_fixture_matches_golden() {
        let mut tree = Tree::new((hidden(), stats(0.0, 1.0)), 0.5, 2, 5);
        tree.expand(1, Some((hidden(), stats(0.25, 0.5)))).unwrap();
        tree.reset_cur();
        tree.expand(0, Some((hidden(), stats(-0.5, 2.0)))).unwrap();
        let text = render_tree_ascii(&tree.snapshot()).unwrap();
        let golden = "\
- r=0.0000 v=1.0000 g=0.5000 n=2 [root]
  a=0 r=-0.5000 v=2.0000 g=0.2500 n=1 [cur]
  a=1 r=0.2500 v=0.5000 g=0.2500 n=1
";
        assert_eq!(text, golden);
    }

    #[test]
    fn rollout_annotations_match_recomputation() {
        let mut tree = Tree::new((hidden(), stats(0.0, 1.0)), 0.9, 2, 5);
        tree.expand(0, Some((hidden(), stats(0.3, 0.7)))).unwrap();
        tree.expand(1, Some((hidden(), stats(0.1, -0.2)))).unwrap();
        let snapshot = tree.snapshot();
        for node in snapshot["nodes"].as_array().unwrap() {
            let id = crate::tree::NodeId(node["id"].as_u64().unwrap() as usize);
            let expect = tree.rollout_return(&tree.path_from_root(id)).unwrap();
            assert!((node["rollout_return"].as_f64().unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn malformed_snapshot_errors() {
        assert!(render_tree_ascii(&serde_json::json!({"nodes": []})).is_err());
        assert!(render_tree_ascii(&serde_json::json!({"root": 0, "cur": 0, "nodes": []})).is_err());
    }
}
