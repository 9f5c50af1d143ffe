//! Cost-model reports: operation counts, crossover and memory tables.

use fftconv::cost::{
    crossover_report, crossover_table, memory_bytes, memory_bytes_packed, ops_report, ram_table, to_megabytes,
    CostParams, SizeMode, Table, DEFAULT_C,
};
use fftconv::LayerConfig;

use crate::Format;

pub const DEFAULT_N_VALUES: [usize; 8] = [8, 12, 16, 24, 32, 48, 64, 128];

#[derive(Debug, Clone)]
pub struct ModelOptions {
    pub ram_table: bool,
    pub crossover: bool,
    /// Per-layer operation counts and memory for this layer.
    pub config: Option<LayerConfig>,
    pub k: usize,
    pub f: usize,
    pub f_prime: usize,
    pub batch: usize,
    pub c: f64,
    pub n_values: Vec<usize>,
    pub pow2: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            ram_table: false,
            crossover: false,
            config: None,
            k: 7,
            f: 96,
            f_prime: 256,
            batch: 128,
            c: DEFAULT_C,
            n_values: DEFAULT_N_VALUES.to_vec(),
            pow2: false,
        }
    }
}

/// Memory of one layer under the reference formula and under this crate's packing.
pub fn memory_table(c: &LayerConfig) -> Table {
    let mut t = Table::new(["S", "n", "f", "f'", "bytes", "RAM used", "packed bytes (f32)"]);
    let bytes = memory_bytes(c);
    t.push([
        c.batch.to_string(),
        c.n.to_string(),
        c.f.to_string(),
        c.f_prime.to_string(),
        bytes.to_string(),
        format!("{}MB", to_megabytes(bytes)),
        memory_bytes_packed(c, 8).to_string(),
    ]);
    t
}

/// Titled sections in order. With no selection, prints the RAM table and
/// the crossover table.
pub fn cmd_model(opts: &ModelOptions) -> Vec<(String, Table)> {
    let mode = if opts.pow2 { SizeMode::PowerOfTwo } else { SizeMode::AsGiven };
    let nothing = !opts.ram_table && !opts.crossover && opts.config.is_none();
    let mut out = Vec::new();
    if let Some(cfg) = opts.config {
        let p = CostParams::new(cfg, opts.c).with_size_mode(mode);
        out.push((format!("operation counts {cfg} C={}", opts.c), ops_report(&p)));
        out.push((format!("memory {cfg}"), memory_table(&cfg)));
    }
    if opts.ram_table || nothing {
        out.push(("RAM".to_string(), ram_table()));
    }
    if opts.crossover || nothing {
        let rows = crossover_table(opts.f, opts.f_prime, opts.batch, opts.k, opts.c, &opts.n_values, mode);
        let title = format!(
            "updateOutput crossover k={} f={} f'={} S={} C={}",
            opts.k, opts.f, opts.f_prime, opts.batch, opts.c
        );
        out.push((title, crossover_report(&rows)));
    }
    out
}

pub fn render(sections: &[(String, Table)], format: Format) -> String {
    match format {
        // Sections are separated by a blank line so each table stays parseable.
        Format::Csv => sections.iter().map(|(_, t)| t.to_csv()).collect::<Vec<_>>().join("\n"),
        Format::Md => {
            sections.iter().map(|(title, t)| format!("{title}\n\n{}", t.to_markdown())).collect::<Vec<_>>().join("\n")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prints_ram_and_crossover() {
        let s = cmd_model(&ModelOptions::default());
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].1.rows.len(), 8);
        assert_eq!(s[1].1.rows.len(), DEFAULT_N_VALUES.len());
    }

    #[test]
    fn config_section() {
        let cfg = LayerConfig::new(5, 16, 256, 384, 128).unwrap();
        let s = cmd_model(&ModelOptions { config: Some(cfg), ram_table: true, ..Default::default() });
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].1.rows.len(), 3);
        assert_eq!(s[1].1.rows[0][5], "196MB");
        let csv = render(&s, Format::Csv);
        assert!(csv.starts_with("op,direct_ops"));
    }
}
