#![allow(dead_code)]

pub mod gradcheck;
pub mod random_models;
pub mod reference;
