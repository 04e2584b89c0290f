//! `key = value` run configuration for training commands.
//!
//! Blank lines and lines starting with `#` are ignored. Unset keys keep
//! their defaults; every seed defaults to the global `--seed`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use querytag::exec::ExecMode;
use querytag::net::{ModelDims, ModelFlags};
use querytag::train::TrainConfig;
use querytag::triplelearn::{Selection, TripleLearnConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dims: ModelDims,
    pub flags: ModelFlags,
    pub train: TrainConfig,
    pub triplelearn: TripleLearnConfig,
    pub split_seed: u64,
    pub init_seed: u64,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            dims: ModelDims::default(),
            flags: ModelFlags::default(),
            train: TrainConfig {
                shuffle_seed: seed,
                ..Default::default()
            },
            triplelearn: TripleLearnConfig {
                seed,
                ..Default::default()
            },
            split_seed: seed,
            init_seed: seed,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| anyhow!("invalid value {v:?} for {key}"))
        }
        fn boolean(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "yes" | "1" | "on" => Ok(true),
                "false" | "no" | "0" | "off" => Ok(false),
                _ => bail!("invalid value {v:?} for {key}: expected true or false"),
            }
        }
        let tl = &mut self.triplelearn;
        let tr = &mut self.train;
        match key {
            "growth_factor" => tl.growth_factor = num(key, value)?,
            "synthetic_fraction" => tl.synthetic_fraction = num(key, value)?,
            "max_iterations" => tl.max_iterations = num(key, value)?,
            "warm_start" => tl.warm_start = boolean(key, value)?,
            "sample_seed" => tl.seed = num(key, value)?,
            "selection" => {
                tl.selection = match value {
                    "test" => Selection::Test,
                    "dev" => Selection::Dev,
                    _ => bail!("invalid value {value:?} for selection: expected test or dev"),
                }
            }
            "max_epochs" => tr.max_epochs = num(key, value)?,
            "patience" => tr.patience = num(key, value)?,
            "batch_size" => tr.batch_size = num(key, value)?,
            "lr" => tr.lr = num(key, value)?,
            "clip" => tr.clip = num(key, value)?,
            "word_dropout" => tr.word_dropout = num(key, value)?,
            "shuffle_seed" => tr.shuffle_seed = num(key, value)?,
            "exec" => {
                tr.exec = match value {
                    "parallel" => ExecMode::Parallel,
                    "sequential" => ExecMode::Sequential,
                    _ => bail!("invalid value {value:?} for exec: expected parallel or sequential"),
                }
            }
            "word_emb" => self.dims.word_emb = num(key, value)?,
            "char_emb" => self.dims.char_emb = num(key, value)?,
            "char_hidden" => self.dims.char_hidden = num(key, value)?,
            "word_hidden" => self.dims.word_hidden = num(key, value)?,
            "use_char_embedding" => self.flags.use_char_embedding = boolean(key, value)?,
            "use_crf" => self.flags.use_crf = boolean(key, value)?,
            "split_seed" => self.split_seed = num(key, value)?,
            "init_seed" => self.init_seed = num(key, value)?,
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{}:{}", origin.display(), i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("expected key = value"))
                .with_context(at)?;
            self.set(key.trim(), value.trim()).with_context(at)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.train.validate()?;
        self.triplelearn.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_line_numbers() {
        let mut c = RunConfig::with_seed(7);
        c.apply_text(
            "# comment\n\ngrowth_factor = 3\nselection=dev\nuse_crf = false\n",
            Path::new("c.cfg"),
        )
        .unwrap();
        assert_eq!(c.triplelearn.growth_factor, 3.0);
        assert_eq!(c.triplelearn.selection, Selection::Dev);
        assert!(!c.flags.use_crf);
        assert_eq!(c.train.shuffle_seed, 7);

        let err = RunConfig::with_seed(0)
            .apply_text("lr = 0.1\nbogus = 1\n", Path::new("c.cfg"))
            .unwrap_err();
        assert_eq!(format!("{err:#}"), "c.cfg:2: unknown key \"bogus\"");
        assert!(RunConfig::with_seed(0)
            .apply_text("growth_factor = 1\n", Path::new("c"))
            .is_err());
    }
}
