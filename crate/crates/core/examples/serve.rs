//! Starts the scoring service on an ephemeral port with an untrained tiny
//! model, sends one request over plain HTTP/1.1 and prints the reply.

use qscore::app::serve::{router, ServiceState};
use qscore::app::Scorer;
use qscore::model::{Model, ModelConfig};
use qscore::synthetic::keyword_vocab;
use std::io::{Read, Write};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let vocab = keyword_vocab();
    let cfg = ModelConfig::tiny().with_vocab_size(vocab.len()).with_max_positions(64);
    let scorer = Scorer {
        model: Model::init(cfg, 1)?,
        vocab,
        max_len: 64,
        fingerprint: "untrained".into(),
    };
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    tokio::spawn(async move { axum::serve(listener, router(ServiceState::new(Some(scorer)))).await });

    let body = r#"{"title": "How do I use amber?", "body": "It fails with an error."}"#;
    let request = format!(
        "POST /v1/score HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let reply = tokio::task::spawn_blocking(move || -> std::io::Result<String> {
        let mut stream = std::net::TcpStream::connect(addr)?;
        stream.write_all(request.as_bytes())?;
        let mut reply = String::new();
        stream.read_to_string(&mut reply)?;
        Ok(reply)
    })
    .await??;
    println!("{reply}");
    Ok(())
}
