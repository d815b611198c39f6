pub mod app;
pub mod corpus;
pub mod model;
pub mod sentiment;
pub mod synthetic;
pub mod textfeat;
pub mod tokenizer;
pub mod train;
