/// Summary of one metric across repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation; zero for a single sample.
    pub sd: f64,
    /// Half-width of the 95% normal-approximation confidence interval.
    pub ci95: f64,
    pub min: f64,
    pub max: f64,
}

impl MetricStats {
    /// All fields are NaN when `samples` is empty.
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return MetricStats {
                mean: f64::NAN,
                sd: f64::NAN,
                ci95: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MetricStats {
            mean,
            sd,
            ci95: 1.96 * sd / (n as f64).sqrt(),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub runs: usize,
    pub success_count: usize,
    pub total_time: MetricStats,
    pub communication_time: MetricStats,
    pub computation_time: MetricStats,
    pub bytes_transmitted: MetricStats,
}

impl RunStats {
    pub fn from_runs(runs: &[super::RunResult]) -> Self {
        let col = |f: fn(&super::RunResult) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        RunStats {
            runs: runs.len(),
            success_count: runs.iter().filter(|r| r.success).count(),
            total_time: MetricStats::from_samples(&col(|r| r.total_time)),
            communication_time: MetricStats::from_samples(&col(|r| r.communication_time)),
            computation_time: MetricStats::from_samples(&col(|r| r.computation_time)),
            bytes_transmitted: MetricStats::from_samples(&col(|r| r.bytes_transmitted as f64)),
        }
    }
}
