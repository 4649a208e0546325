//! Browser bindings. The logic lives in plain functions returning JSON
//! strings so it can be tested natively; the `#[wasm_bindgen]` wrappers
//! only convert errors.

use graphdial::dataset::{gen_er, gen_ws};
use graphdial::dfs::encode_min_dfs;
use graphdial::features::{Feature, FeatureVector};
use graphdial::generate::{generate_from_checkpoint, GenerationRequest};
use graphdial::graph::Graph;
use graphdial::train::Checkpoint;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn describe(g: &Graph) -> Value {
    let f = FeatureVector::compute(g);
    let code = if g.is_connected() && g.edge_count() > 0 {
        encode_min_dfs(g).ok().map(|c| {
            c.tuples
                .iter()
                .map(|t| [t.t_u, t.t_v, t.l_u, t.l_e, t.l_v])
                .collect::<Vec<_>>()
        })
    } else {
        None
    };
    json!({
        "nodes": g.node_count(),
        "edges": g.canonical_edges(),
        "connected": g.is_connected(),
        "code": code,
        "features": {
            "aspl": f.aspl,
            "avg_degree": f.avg_degree,
            "modularity": f.modularity,
            "clustering": f.clustering,
            "plaw": f.plaw_exponent,
            "density": Feature::Density.compute(g).ok(),
        },
    })
}

/// Minimum DFS code and features of an edge list ("u v" per line).
pub fn analyze_json(edge_list: &str) -> Result<String, String> {
    let g = Graph::from_edge_list(edge_list).map_err(|e| e.to_string())?;
    Ok(describe(&g).to_string())
}

/// A seeded Watts–Strogatz (`param` = rewiring probability, K = 3) or
/// Erdős–Rényi (`param` = edge probability) graph with its features.
pub fn random_graph_json(kind: &str, n: usize, param: f64, seed: u32) -> Result<String, String> {
    let g = match kind {
        "ws" => gen_ws(n, 3, param, seed as u64),
        "er" => gen_er(n, param, seed as u64),
        other => return Err(format!("unknown graph kind {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    Ok(describe(&g).to_string())
}

/// A model loaded from checkpoint bytes.
#[wasm_bindgen]
pub struct Generator {
    ckpt: Checkpoint,
}

impl Generator {
    pub fn load(bytes: &[u8]) -> Result<Generator, String> {
        Checkpoint::from_bytes(bytes)
            .map(|ckpt| Generator { ckpt })
            .map_err(|e| e.to_string())
    }

    pub fn info_json(&self) -> String {
        let hp = &self.ckpt.model.hp;
        json!({
            "feature": self.ckpt.feature,
            "epoch": self.ckpt.epoch,
            "latent_dim": hp.latent_dim,
            "condition_dim": hp.condition_dim,
            "spots": hp.spots.label(),
            "max_seq_len": self.ckpt.max_seq_len,
        })
        .to_string()
    }

    /// One graph at `condition`; failed samples are reported, not thrown.
    pub fn generate_json(&self, condition: f64, seed: u32) -> Result<String, String> {
        let batch = generate_from_checkpoint(&self.ckpt, &GenerationRequest::new(condition, 1, seed as u64))
            .map_err(|e| e.to_string())?;
        let slot = &batch.slots[0];
        Ok(match &slot.result {
            Some(g) => {
                let mut v = describe(&g.graph);
                v["condition"] = json!(batch.condition.value);
                v["steps"] = json!(g.steps);
                v["truncated"] = json!(g.truncated);
                v.to_string()
            }
            None => json!({"condition": batch.condition.value, "error": slot.error}).to_string(),
        })
    }
}

#[wasm_bindgen]
impl Generator {
    #[wasm_bindgen(constructor)]
    pub fn new(bytes: &[u8]) -> Result<Generator, JsError> {
        Generator::load(bytes).map_err(|e| JsError::new(&e))
    }

    pub fn info(&self) -> String {
        self.info_json()
    }

    pub fn generate(&self, condition: f64, seed: u32) -> Result<String, JsError> {
        self.generate_json(condition, seed).map_err(|e| JsError::new(&e))
    }
}

#[wasm_bindgen]
pub fn analyze(edge_list: &str) -> Result<String, JsError> {
    analyze_json(edge_list).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn random_graph(kind: &str, n: usize, param: f64, seed: u32) -> Result<String, JsError> {
    random_graph_json(kind, n, param, seed).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_triangle_with_tail() {
        let v: Value = serde_json::from_str(&analyze_json("0 1\n1 2\n2 0\n2 3\n").unwrap()).unwrap();
        assert_eq!(v["nodes"], 4);
        assert_eq!(v["code"].as_array().unwrap().len(), 4);
        assert_eq!(v["features"]["avg_degree"], 2.0);
        assert!(analyze_json("0 x").is_err());
    }

    #[test]
    fn disconnected_has_no_code() {
        let v: Value = serde_json::from_str(&analyze_json("0 1\n2 3\n").unwrap()).unwrap();
        assert_eq!(v["connected"], false);
        assert!(v["code"].is_null());
        assert!(v["features"]["aspl"].is_null());
    }

    #[test]
    fn random_graphs_are_seeded() {
        let a = random_graph_json("ws", 20, 0.3, 5).unwrap();
        assert_eq!(a, random_graph_json("ws", 20, 0.3, 5).unwrap());
        let er: Value = serde_json::from_str(&random_graph_json("er", 12, 0.4, 1).unwrap()).unwrap();
        assert_eq!(er["nodes"], 12);
        assert!(random_graph_json("ba", 10, 0.1, 0).is_err());
    }

    #[test]
    fn bad_checkpoint_is_rejected() {
        assert!(Generator::load(b"not a checkpoint").is_err());
    }
}
