//! Roadside pedestrian detection and pedestrian-to-vehicle collision warning.
//!
//! A fixed camera's detections are localized onto the road, tracked, encoded
//! as Personal Safety Messages and broadcast alongside collision alerts
//! computed against vehicles' Basic Safety Messages.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod messages;
pub mod node;
pub mod perception;
pub mod pipeline;
pub mod pscw;
pub mod rsu_net;
pub mod tracking;
