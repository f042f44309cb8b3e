//! TCP transport: newline-delimited JSON, one task per client, one task
//! owning the session.

use std::collections::HashMap;
use std::future::Future;
use std::time::{Duration, Instant};

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tracing::{debug, info, warn};

use crate::protocol::{ErrorCode, ErrorPayload, RawMessage, Request, ServerMessage, StatePayload};
use crate::session::{Audience, Outbound, Session};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// Wall time between ticks; one `state` message is broadcast per tick.
    pub tick: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { tick: Duration::from_millis(50) }
    }
}

type ClientId = u64;

/// A message ready to write, with its envelope time.
type Stamped = (ServerMessage, f64);

enum Inbound {
    Connected { id: ClientId, tx: mpsc::UnboundedSender<Stamped> },
    Request { id: ClientId, seq: u64, t: f64, request: Request },
    /// The client sent something unreadable.
    Rejected { id: ClientId, error: ErrorPayload },
    Disconnected { id: ClientId },
}

struct Client {
    tx: mpsc::UnboundedSender<Stamped>,
    greeted: bool,
    debug: bool,
}

/// Serves `session` on `listener` until `shutdown` resolves. Returns the
/// session so its telemetry and trace can be saved.
pub async fn serve(listener: TcpListener, mut session: Session, options: ServeOptions, shutdown: impl Future<Output = ()>) -> Session {
    let (in_tx, mut in_rx) = mpsc::unbounded_channel::<Inbound>();
    let accept_tx = in_tx.clone();
    let acceptor = tokio::spawn(async move {
        let mut next_id: ClientId = 0;
        loop {
            match listener.accept().await {
                Ok((stream, peer)) => {
                    next_id += 1;
                    info!(client = next_id, %peer, "client connected");
                    tokio::spawn(client_task(next_id, stream, accept_tx.clone()));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    });

    let mut clients: HashMap<ClientId, Client> = HashMap::new();
    let mut ticker = tokio::time::interval(options.tick);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last = Instant::now();
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            _ = ticker.tick() => {
                let now = Instant::now();
                let out = session.tick((now - last).as_secs_f64());
                last = now;
                deliver(&clients, None, out);
            }
            Some(msg) = in_rx.recv() => match msg {
                Inbound::Connected { id, tx } => {
                    clients.insert(id, Client { tx, greeted: false, debug: false });
                }
                Inbound::Rejected { id, error } => {
                    if let Some(c) = clients.get(&id) {
                        let _ = c.tx.send((ServerMessage::Error(error), session.time()));
                    }
                }
                Inbound::Disconnected { id } => {
                    clients.remove(&id);
                    info!(client = id, "client disconnected");
                }
                Inbound::Request { id, seq, t, request } => {
                    let Some(client) = clients.get_mut(&id) else { continue };
                    if let Request::Hello(h) = &request {
                        let out = session.handle(request.clone(), seq, t, h.debug);
                        if matches!(out.first().map(|o| &o.message), Some(ServerMessage::Hello(_))) {
                            client.greeted = true;
                            client.debug = h.debug && session.info(h.debug).debug;
                        }
                        deliver(&clients, Some(id), out);
                    } else if !client.greeted {
                        let e = ErrorPayload::new(ErrorCode::HandshakeRequired, "send hello first").reply_to(seq);
                        let _ = client.tx.send((ServerMessage::Error(e), session.time()));
                    } else {
                        debug!(client = id, kind = request.kind(), seq, "request");
                        let debug = client.debug;
                        let out = session.handle(request, seq, t, debug);
                        deliver(&clients, Some(id), out);
                    }
                }
            }
        }
    }
    acceptor.abort();
    let out = session.stop();
    deliver(&clients, None, out);
    session
}

/// Sends replies to `from` and broadcasts to every greeted client. Ground
/// truth is removed from `state` for clients that did not ask for it.
fn deliver(clients: &HashMap<ClientId, Client>, from: Option<ClientId>, out: Vec<Outbound>) {
    for Outbound { audience, t, message } in out {
        match audience {
            Audience::Requester => {
                if let Some(c) = from.and_then(|id| clients.get(&id)) {
                    let _ = c.tx.send((message, t));
                }
            }
            Audience::All => {
                for c in clients.values().filter(|c| c.greeted) {
                    let msg = match &message {
                        ServerMessage::State(s) if !c.debug => ServerMessage::State(StatePayload { truth: None, ..s.clone() }),
                        other => other.clone(),
                    };
                    let _ = c.tx.send((msg, t));
                }
            }
        }
    }
}

async fn client_task(id: ClientId, stream: TcpStream, inbox: mpsc::UnboundedSender<Inbound>) {
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Stamped>();
    if inbox.send(Inbound::Connected { id, tx: tx.clone() }).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        // outbound seq starts at 1 and increases by one per message
        let mut seq = 0u64;
        while let Some((m, t)) = rx.recv().await {
            seq += 1;
            let mut line = m.encode(seq, t);
            line.push('\n');
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
    });

    let mut lines = BufReader::new(read).lines();
    let mut last_seq: Option<u64> = None;
    loop {
        let line = match lines.next_line().await {
            Ok(Some(l)) => l,
            Ok(None) => break,
            Err(e) => {
                debug!(client = id, "read failed: {e}");
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawMessage = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let error = ErrorPayload::new(ErrorCode::BadMessage, e.to_string());
                if inbox.send(Inbound::Rejected { id, error }).is_err() {
                    break;
                }
                continue;
            }
        };
        if last_seq.is_some_and(|s| raw.seq <= s) {
            let msg = format!("seq {} does not follow {}", raw.seq, last_seq.unwrap_or(0));
            let error = ErrorPayload::new(ErrorCode::Sequence, msg).reply_to(raw.seq);
            if inbox.send(Inbound::Rejected { id, error }).is_err() {
                break;
            }
            continue;
        }
        last_seq = Some(raw.seq);
        match Request::parse(&raw) {
            Ok(request) => {
                if inbox.send(Inbound::Request { id, seq: raw.seq, t: raw.t, request }).is_err() {
                    break;
                }
            }
            Err(error) => {
                if inbox.send(Inbound::Rejected { id, error }).is_err() {
                    break;
                }
            }
        }
    }
    let _ = inbox.send(Inbound::Disconnected { id });
    drop(tx);
    let _ = writer.await;
}
