//! Checkpoint container (HDF5): `/mask`, `/mask_acc`, `/params/<name>`,
//! `/optimizer/<name>` and `/history` datasets, with the configuration as a
//! TOML string attribute.

use std::path::Path;

use hdf5_metno::File;
use ndarray::{Array2, ArrayD, IxDyn};

use super::report::{EpochRecord, TrainReport};
use super::{TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::io::{has_attr, read_str_attr, write_str_attr};
use crate::net::{init_network, Parameters};
use crate::sensing::CodedMask;

const FORMAT: &str = "codedlf-checkpoint-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
    pub initial_train_loss: f64,
    /// Epoch records up to and including `state.epoch`.
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn mask(&self) -> &CodedMask {
        &self.state.mask
    }

    pub fn params(&self) -> &Parameters {
        &self.state.params
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let h5 = |e| Error::hdf5(path, e);
        let file = File::create(path).map_err(h5)?;
        write_str_attr(&file, "format", FORMAT).map_err(h5)?;
        write_str_attr(&file, "config", &self.config.to_toml()?).map_err(h5)?;
        for (name, v) in [("epoch", self.state.epoch as u64), ("step", self.state.step)] {
            file.new_attr::<u64>().create(name).and_then(|a| a.write_scalar(&v)).map_err(h5)?;
        }
        file.new_attr::<f64>()
            .create("initial_train_loss")
            .and_then(|a| a.write_scalar(&self.initial_train_loss))
            .map_err(h5)?;
        file.new_dataset_builder()
            .with_data(self.state.mask.tile())
            .create("mask")
            .map_err(h5)?;
        file.new_dataset_builder()
            .with_data(&self.state.mask_acc)
            .create("mask_acc")
            .map_err(h5)?;
        let params = file.create_group("params").map_err(h5)?;
        let optim = file.create_group("optimizer").map_err(h5)?;
        for (t, acc) in self.state.params.tensors().iter().zip(&self.state.param_acc) {
            let arr = ArrayD::from_shape_vec(IxDyn(&t.shape), t.data.clone()).expect("tensor shape");
            params.new_dataset_builder().with_data(&arr).create(t.name.as_str()).map_err(h5)?;
            if t.trainable {
                let arr = ArrayD::from_shape_vec(IxDyn(&t.shape), acc.clone()).expect("tensor shape");
                optim.new_dataset_builder().with_data(&arr).create(t.name.as_str()).map_err(h5)?;
            }
        }
        let n = self.history.len();
        file.new_attr::<u64>()
            .create("history_len")
            .and_then(|a| a.write_scalar(&(n as u64)))
            .map_err(h5)?;
        if n > 0 {
            let hist = Array2::from_shape_vec((n, 11), TrainReport::history_matrix(&self.history)).expect("11 columns");
            file.new_dataset_builder().with_data(&hist).create("history").map_err(h5)?;
        }
        file.flush().map_err(h5)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        let h5 = |e| Error::hdf5(path, e);
        let file = File::open(path).map_err(h5)?;
        let missing = |key: &str| Error::MissingDataset {
            key: key.into(),
            path: path.into(),
        };
        for attr in ["format", "config", "epoch", "step", "initial_train_loss", "history_len"] {
            if !has_attr(&file, attr) {
                return Err(missing(attr));
            }
        }
        let format = read_str_attr(&file, "format").map_err(h5)?;
        if format != FORMAT {
            return Err(Error::parse("checkpoint", format!("unsupported format {format:?}")));
        }
        let config = TrainConfig::from_toml(&read_str_attr(&file, "config").map_err(h5)?)?;
        let scalar_u64 = |name: &str| file.attr(name).and_then(|a| a.read_scalar::<u64>()).map_err(h5);
        let epoch = scalar_u64("epoch")? as usize;
        let step = scalar_u64("step")?;
        let history_len = scalar_u64("history_len")? as usize;
        let initial_train_loss = file
            .attr("initial_train_loss")
            .and_then(|a| a.read_scalar::<f64>())
            .map_err(h5)?;

        let read2 = |key: &str| -> Result<Array2<f64>> {
            if !file.link_exists(key) {
                return Err(missing(key));
            }
            file.dataset(key).and_then(|d| d.read_2d::<f64>()).map_err(h5)
        };
        let mask = CodedMask::new(read2("mask")?)?;
        let mask_acc = read2("mask_acc")?;
        if mask_acc.dim() != mask.tile().dim() {
            return Err(Error::dim("mask accumulator does not match the mask tile"));
        }
        let mut template = init_network(&config.network, 0)?;
        let mut param_acc = Vec::new();
        for t in template.tensors_mut() {
            let key = format!("params/{}", t.name);
            if !file.link_exists(&key) {
                return Err(missing(&key));
            }
            let ds = file.dataset(&key).map_err(h5)?;
            if ds.shape() != t.shape {
                return Err(Error::dim(format!("`{key}` has shape {:?}, expected {:?}", ds.shape(), t.shape)));
            }
            t.data = ds.read_raw::<f64>().map_err(h5)?;
            if t.trainable {
                let key = format!("optimizer/{}", t.name);
                if !file.link_exists(&key) {
                    return Err(missing(&key));
                }
                let acc = file.dataset(&key).and_then(|d| d.read_raw::<f64>()).map_err(h5)?;
                if acc.len() != t.data.len() {
                    return Err(Error::dim(format!("`{key}` has the wrong element count")));
                }
                param_acc.push(acc);
            } else {
                param_acc.push(Vec::new());
            }
        }
        let params = Parameters::from_tensors(config.network, template.tensors().to_vec())?;
        let history = if history_len > 0 {
            if !file.link_exists("history") {
                return Err(missing("history"));
            }
            let raw = file.dataset("history").and_then(|d| d.read_raw::<f64>()).map_err(h5)?;
            TrainReport::history_from_matrix(&raw)?
        } else {
            Vec::new()
        };
        if history.len() != history_len {
            return Err(Error::dim("history length does not match its attribute"));
        }
        if history.iter().enumerate().any(|(i, r)| r.epoch != i + 1) {
            return Err(Error::ValueRange {
                key: "history".into(),
                detail: "epoch indices are not consecutive".into(),
            });
        }
        Ok(Self {
            config,
            state: TrainState {
                mask,
                params,
                mask_acc,
                param_acc,
                step,
                epoch,
            },
            initial_train_loss,
            history,
        })
    }
}
