use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use nfsense_core::channel_sim::SimError;
use nfsense_core::config::ConfigError;
use nfsense_core::dataset_io::DatasetError;
use nfsense_core::infer_eval::EvalError;
use nfsense_core::model::ModelError;
use nfsense_core::preprocess::PreprocessError;
use nfsense_core::train::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Config,
    Io,
    Format,
    Invariant,
    Runtime,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Usage => 2,
            Category::Config => 3,
            Category::Io => 4,
            Category::Format => 5,
            Category::Invariant => 6,
            Category::Runtime => 7,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Io => "io",
            Category::Format => "format",
            Category::Invariant => "invariant",
            Category::Runtime => "runtime",
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub message: String,
}

impl Failure {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }

    pub fn report(&self) -> ExitCode {
        let msg = self.message.replace('\n', " ");
        eprintln!("error[{}]: {msg}", self.category);
        ExitCode::from(self.category.exit_code())
    }
}

fn model_category(e: &ModelError) -> Category {
    match e {
        ModelError::Io { .. } => Category::Io,
        ModelError::Checkpoint(_) => Category::Format,
        ModelError::Numerics(_) => Category::Runtime,
        _ => Category::Invariant,
    }
}

fn dataset_category(e: &DatasetError) -> Category {
    match e {
        DatasetError::Io { .. } => Category::Io,
        DatasetError::Split(_) => Category::Invariant,
        DatasetError::Encode { .. } => Category::Runtime,
        _ => Category::Format,
    }
}

fn preprocess_category(e: &PreprocessError) -> Category {
    match e {
        PreprocessError::Io { .. } => Category::Io,
        PreprocessError::Cache(_) => Category::Format,
        PreprocessError::Params(_) => Category::Config,
        _ => Category::Invariant,
    }
}

fn train_category(e: &TrainError) -> Category {
    match e {
        TrainError::Model(m) => model_category(m),
        TrainError::Numerics(_) => Category::Runtime,
        _ => Category::Invariant,
    }
}

macro_rules! from_error {
    ($ty:ty, $cat:expr) => {
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                let cat: fn(&$ty) -> Category = $cat;
                Failure::new(cat(&e), e.to_string())
            }
        }
    };
}

from_error!(ConfigError, |e| match e {
    ConfigError::Io { .. } => Category::Io,
    _ => Category::Config,
});
from_error!(SimError, |e| match e {
    SimError::Invalid(_) => Category::Config,
    SimError::Domain(_) => Category::Invariant,
});
from_error!(DatasetError, dataset_category);
from_error!(PreprocessError, preprocess_category);
from_error!(ModelError, model_category);
from_error!(TrainError, train_category);
from_error!(EvalError, |e| match e {
    EvalError::Model(m) => model_category(m),
    EvalError::Train(t) => train_category(t),
    EvalError::Dataset(d) => dataset_category(d),
    EvalError::Preprocess(p) => preprocess_category(p),
    EvalError::Io { .. } => Category::Io,
    _ => Category::Invariant,
});
