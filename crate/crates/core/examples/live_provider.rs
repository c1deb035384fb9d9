// The HTTP provider against a throwaway local server that answers like a
// search results page.

use nwd_lens::provider::{LiveProvider, LiveProviderConfig, SystemClock};
use nwd_lens::{parse_query, CountProvider};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;

fn serve(listener: TcpListener, requests: usize) -> std::thread::JoinHandle<Vec<String>> {
    std::thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut line = String::new();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            reader.read_line(&mut line).unwrap();
            loop {
                let mut h = String::new();
                if reader.read_line(&mut h).unwrap() == 0 || h == "\r\n" {
                    break;
                }
            }
            seen.push(line.trim().to_string());
            let body = "<html><div id=stats>About 1,234 results</div></html>";
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    })
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    if nwd_lens::provider::offline_mode() {
        println!("offline mode set; skipping");
        return Ok(());
    }
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = serve(listener, 1);

    let mut cfg = LiveProviderConfig::new(
        format!("http://{addr}/search?q={{query}}&from={{start_date}}&to={{end_date}}"),
        r"About ([0-9.,]+) results",
    );
    cfg.min_request_interval_ms = 0;
    let provider = LiveProvider::new(cfg, "live-demo", Arc::new(SystemClock::new()))?;

    let q = parse_query(r#""Wirikuta" AND "mines""#)?;
    let sample = provider.fetch_count(&q, 2005)?;
    println!("count {} for {}", sample.count, sample.query_canonical);
    println!("request: {}", server.join().map_err(|_| "server panicked")?.join(""));
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
