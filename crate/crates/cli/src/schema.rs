//! JSON schemas of the command outputs, bundled at compile time.

use clap::ValueEnum;

#[derive(Clone, Copy, ValueEnum)]
pub enum SchemaName {
    Info,
    Check,
    Fit,
    Simulate,
    Error,
    Spec,
}

pub fn text(name: SchemaName) -> &'static str {
    match name {
        SchemaName::Info => include_str!("../../../schemas/info.schema.json"),
        SchemaName::Check => include_str!("../../../schemas/check.schema.json"),
        SchemaName::Fit => include_str!("../../../schemas/fit.schema.json"),
        SchemaName::Simulate => include_str!("../../../schemas/simulate.schema.json"),
        SchemaName::Error => include_str!("../../../schemas/error.schema.json"),
        SchemaName::Spec => include_str!("../../../schemas/spec.schema.json"),
    }
}
