#![allow(dead_code)]

pub mod criteria;
pub mod gradient_suite;
pub mod models;
