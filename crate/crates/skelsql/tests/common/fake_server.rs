use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone)]
pub struct Hit {
    pub method: String,
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

type Handler = dyn Fn(usize, &Hit) -> (u16, String) + Send + Sync;

/// Local HTTP server answering from a closure. The closure gets the
/// zero-based request number and the request.
pub struct FakeServer {
    server: Arc<Server>,
    hits: Arc<Mutex<Vec<Hit>>>,
    worker: Option<JoinHandle<()>>,
    pub url: String,
}

impl FakeServer {
    pub fn start(handler: impl Fn(usize, &Hit) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip address"));
        let hits = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let worker = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let hit = Hit {
                        method: req.method().to_string(),
                        path: req.url().to_string(),
                        body,
                        authorization: req
                            .headers()
                            .iter()
                            .find(|h| h.field.equiv("Authorization"))
                            .map(|h| h.value.to_string()),
                    };
                    let n = {
                        let mut hits = hits.lock().unwrap();
                        hits.push(hit.clone());
                        hits.len() - 1
                    };
                    let (status, text) = handler(n, &hit);
                    let content_type = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(Response::from_string(text).with_status_code(status).with_header(content_type));
                }
            })
        };
        FakeServer { server, hits, worker: Some(worker), url }
    }

    pub fn hits(&self) -> Vec<Hit> {
        self.hits.lock().unwrap().clone()
    }
}

impl Drop for FakeServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
