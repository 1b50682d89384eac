//! Shared service state: the registry of runs this instance has served.

use std::collections::BTreeMap;
use std::sync::Arc;
use tokio::sync::RwLock;
use trrgr_core::api::RunSummary;

#[derive(Clone, Default)]
pub struct AppState {
    runs: Arc<RwLock<BTreeMap<String, RunSummary>>>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    pub async fn register(&self, summary: RunSummary) {
        self.runs
            .write()
            .await
            .insert(summary.run_id.clone(), summary);
    }

    pub async fn update(&self, run_id: &str, f: impl FnOnce(&mut RunSummary)) {
        if let Some(summary) = self.runs.write().await.get_mut(run_id) {
            f(summary);
        }
    }

    pub async fn get(&self, run_id: &str) -> Option<RunSummary> {
        self.runs.read().await.get(run_id).cloned()
    }

    pub async fn list(&self) -> Vec<RunSummary> {
        self.runs.read().await.values().cloned().collect()
    }
}
