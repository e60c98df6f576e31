//! Layout of a loop run directory.
//!
//! ```text
//! config.txt                 snapshot of the loop configuration
//! metrics.csv                one row per iteration
//! labels.csv                 final labels
//! labels/iter_000.csv        labels entering iteration 1, verified = survives iteration 1
//! labels/iter_XXX.csv        labels after iteration XXX, verified = survives iteration XXX+1
//! checkpoints/iter_XXX.sgpmlp
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::student::{read_checkpoint, write_checkpoint, MlpDescriptor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("labels"))?;
        std::fs::create_dir_all(root.join("checkpoints"))?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.join("config.txt").is_file() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} is not a run directory (no config.txt)", root.display()),
            )
            .into());
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn labels_path(&self) -> PathBuf {
        self.root.join("labels.csv")
    }

    pub fn iteration_labels_path(&self, iteration: usize) -> PathBuf {
        self.root.join("labels").join(format!("iter_{iteration:03}.csv"))
    }

    pub fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("iter_{iteration:03}.sgpmlp"))
    }

    pub fn save_checkpoint(&self, iteration: usize, model: &MlpDescriptor) -> Result<()> {
        write_checkpoint(model, BufWriter::new(File::create(self.checkpoint_path(iteration))?))
    }

    pub fn load_checkpoint(&self, iteration: usize) -> Result<MlpDescriptor> {
        load_model(self.checkpoint_path(iteration))
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpDescriptor> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

pub fn save_model(model: &MlpDescriptor, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}
