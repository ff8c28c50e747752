pub mod config;
pub mod interactive;
pub mod lexer;
pub mod llm;
pub mod matcher;
pub mod pipeline;
pub mod prompt;
pub mod reflection;
pub mod replay;
pub mod scheduler;
pub mod service;
pub mod session;
pub mod validator;
