pub mod datagen;
pub mod graph;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod seeding;
