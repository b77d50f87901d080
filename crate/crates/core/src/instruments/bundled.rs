//! Instrument definitions shipped with the crate.

use super::{Instrument, InstrumentError};

pub const NEO_FFI_30: &str = include_str!("../../data/instruments/neo-ffi-30.toml");
pub const NEO_FFI_30_THIRD_PERSON: &str = include_str!("../../data/instruments/neo-ffi-30-third-person.toml");
pub const IRI_PT_FS: &str = include_str!("../../data/instruments/iri-pt-fs.toml");

/// Bundled definitions as `(instrument_id, document)`.
pub fn documents() -> [(&'static str, &'static str); 3] {
    [
        ("neo-ffi-30", NEO_FFI_30),
        ("neo-ffi-30-third-person", NEO_FFI_30_THIRD_PERSON),
        ("iri", IRI_PT_FS),
    ]
}

pub fn neo_ffi_30() -> Instrument {
    Instrument::from_toml(NEO_FFI_30).expect("bundled NEO-FFI-30")
}

pub fn neo_ffi_30_third_person() -> Instrument {
    Instrument::from_toml(NEO_FFI_30_THIRD_PERSON).expect("bundled NEO-FFI-30 third person")
}

pub fn iri() -> Instrument {
    Instrument::from_toml(IRI_PT_FS).expect("bundled IRI")
}

pub fn all() -> Vec<Instrument> {
    vec![neo_ffi_30(), neo_ffi_30_third_person(), iri()]
}

/// Looks up a bundled instrument by id; `iri-pt-fs` and `neo` are accepted aliases.
pub fn by_id(id: &str) -> Result<Instrument, InstrumentError> {
    match id {
        "neo-ffi-30" | "neo" => Ok(neo_ffi_30()),
        "neo-ffi-30-third-person" => Ok(neo_ffi_30_third_person()),
        "iri" | "iri-pt-fs" => Ok(iri()),
        other => Err(InstrumentError::UnknownInstrument(other.to_string())),
    }
}
