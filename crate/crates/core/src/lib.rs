//! Metadata-driven store for meteorological fields.
//!
//! Fields are opaque byte payloads identified by a set of keyword/value pairs.
//! A [`schema::Schema`] splits each identifier into dataset, collocation and
//! element keys; a [`backends::Store`] holds the bytes and a
//! [`backends::Catalogue`] indexes them. Two backend families are provided:
//!
//! * `kv`: stores each field in an array object of the MVCC [`engine`], and
//!   indexes it in a tree of key-value objects. Writes are visible as soon as
//!   `archive` returns.
//! * `toc`: appends fields to per-process data files and publishes per-process
//!   index blobs through an append-only table-of-contents file at `flush`.
//!
//! [`fdb::Fdb`] is the user-facing session over any such pair, and [`wire`]
//! serves the engine over TCP so independent processes share one engine.

pub mod backends;
pub mod config;
pub mod engine;
pub mod error;
pub mod fdb;
pub mod pathenc;
pub mod profile;
pub mod schema;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod wire;

pub use error::{Error, Result};
pub use fdb::Fdb;
pub use schema::{Key, Request, Schema};
