//! Rigid-body attitude control on SO(3) with an angular-velocity observer.

pub mod controller;
pub mod gain;
pub mod lyapunov;
pub mod observer;
pub mod rigid_body;
pub mod so3;
pub mod sim;
