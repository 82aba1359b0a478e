/// One experiment datapoint, the unit of every exported CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub experiment_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub metric_name: String,
    pub x_value: f64,
    pub y_value: f64,
    pub n_samples: u64,
    /// Wall-clock cost; zero for records that must stay reproducible.
    pub wall_clock_ms: f64,
}

impl MetricsRecord {
    pub fn new(experiment_id: &str, metric_name: &str, x_value: f64, y_value: f64, n_samples: u64) -> Self {
        MetricsRecord {
            experiment_id: experiment_id.to_string(),
            config_hash: String::new(),
            seed: 0,
            metric_name: metric_name.to_string(),
            x_value,
            y_value,
            n_samples,
            wall_clock_ms: 0.0,
        }
    }

    pub fn with_origin(mut self, config_hash: &str, seed: u64) -> Self {
        self.config_hash = config_hash.to_string();
        self.seed = seed;
        self
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
