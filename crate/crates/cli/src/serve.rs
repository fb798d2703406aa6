use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use hunt_core::protocol::{ConnId, Server, ServerConfig, MAX_FRAME_BYTES};
use hunt_core::recording::{EventLog, LogHeader};
use hunt_core::session::Session;
use serde_json::json;
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::{http, Message};

use crate::commands::{load_building, load_scenario, log_dir, CliError, Output};
use crate::ServeArgs;

/// Per-connection outbound queue; a full queue detaches the client.
const OUTBOUND_QUEUE: usize = 1024;
const POLL: Duration = Duration::from_millis(5);

enum Inbound {
    Open {
        out: SyncSender<Outbound>,
        reply: Sender<ConnId>,
    },
    Frame(ConnId, Vec<u8>),
    Closed(ConnId),
}

enum Outbound {
    Frame(String),
    Close,
}

pub fn run(args: &ServeArgs, out: &Output) -> Result<(), CliError> {
    if !(args.tick_hz.is_finite() && args.tick_hz > 0.0) {
        return Err(CliError::validation(
            "InvalidArgument",
            "--tick-hz must be a positive number",
        ));
    }
    let building = Arc::new(load_building(&args.building)?);
    let scenario = load_scenario(&building, &args.scenario)?;
    let session = Session::new(building, scenario, args.seed)
        .map_err(|e| CliError::validation(e.code(), e))?;

    let ws = bind(args.port)?;
    let tcp = args.tcp_port.map(bind).transpose()?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| log_dir().join(format!("{}.hunt.ndjson", session.session_id())));
    let started_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let log = EventLog::create(&log_path, LogHeader::for_session(&session, started_at))
        .map_err(|e| CliError::environment("IoError", format!("{}: {e}", log_path.display())))?;

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst))
            .map_err(|e| CliError::environment("SignalError", e))?;
    }

    let (tx, rx) = mpsc::channel();
    let ws_port = local_port(&ws)?;
    let tcp_port = tcp.as_ref().map(local_port).transpose()?;
    {
        let tx = tx.clone();
        thread::spawn(move || accept_loop(ws, tx, ws_connection));
    }
    if let Some(listener) = tcp {
        let tx = tx.clone();
        thread::spawn(move || accept_loop(listener, tx, tcp_connection));
    }
    drop(tx);

    out.emit(
        json!({
            "listening": ws_port,
            "tcp": tcp_port,
            "session_id": session.session_id(),
            "log": log_path,
        }),
        || {
            let mut s = format!("listening on :{ws_port}");
            if let Some(p) = tcp_port {
                s.push_str(&format!("\nndjson on :{p}"));
            }
            s
        },
    );

    let server = Server::new(session, log, ServerConfig::default());
    let period = Duration::from_secs_f64(1.0 / args.tick_hz);
    let mut server = central_loop(server, rx, period, &stop);

    let result = server
        .shutdown()
        .map_err(|e| CliError::environment("IoError", format!("{}: {e}", log_path.display())));
    out.emit(
        json!({"stopped": true, "tick": server.session().tick(), "log": log_path}),
        || format!("stopped at tick {}; log in {}", server.session().tick(), log_path.display()),
    );
    result
}

fn bind(port: u16) -> Result<TcpListener, CliError> {
    TcpListener::bind(("0.0.0.0", port))
        .map_err(|e| CliError::environment("BindFailed", format!("port {port}: {e}")))
}

fn local_port(l: &TcpListener) -> Result<u16, CliError> {
    l.local_addr()
        .map(|a| a.port())
        .map_err(|e| CliError::environment("BindFailed", e))
}

fn central_loop(
    mut server: Server,
    rx: Receiver<Inbound>,
    period: Duration,
    stop: &AtomicBool,
) -> Server {
    let mut outs: BTreeMap<ConnId, SyncSender<Outbound>> = BTreeMap::new();
    let mut next_tick = Instant::now() + period;
    let mut warned = false;
    while !stop.load(Ordering::SeqCst) {
        let wait = next_tick
            .saturating_duration_since(Instant::now())
            .min(Duration::from_millis(50));
        match rx.recv_timeout(wait) {
            Ok(Inbound::Open { out, reply }) => {
                let id = server.connect();
                outs.insert(id, out);
                let _ = reply.send(id);
            }
            Ok(Inbound::Frame(id, bytes)) => {
                server.receive(id, &bytes);
                flush(&mut server, &mut outs);
            }
            Ok(Inbound::Closed(id)) => {
                server.disconnect(id);
                outs.remove(&id);
            }
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {}
        }
        if Instant::now() >= next_tick {
            server.tick();
            flush(&mut server, &mut outs);
            next_tick += period;
            // Do not try to catch up after a long stall.
            let now = Instant::now();
            if next_tick < now {
                next_tick = now + period;
            }
            if !warned {
                if let Some(e) = server.log_failure() {
                    eprintln!("warning: event log write failed: {e}");
                    warned = true;
                }
            }
        }
    }
    for tx in outs.values() {
        let _ = tx.try_send(Outbound::Close);
    }
    server
}

fn flush(server: &mut Server, outs: &mut BTreeMap<ConnId, SyncSender<Outbound>>) {
    let mut gone = Vec::new();
    for (&id, tx) in outs.iter() {
        let mut alive = true;
        for frame in server.drain(id) {
            match tx.try_send(Outbound::Frame(frame)) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                    alive = false;
                    break;
                }
            }
        }
        if alive && !server.is_open(id) {
            let _ = tx.try_send(Outbound::Close);
            alive = false;
        }
        if !alive {
            gone.push(id);
        }
    }
    for id in gone {
        server.disconnect(id);
        outs.remove(&id);
    }
}

fn accept_loop(
    listener: TcpListener,
    tx: Sender<Inbound>,
    handle: fn(TcpStream, Sender<Inbound>),
) {
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                let tx = tx.clone();
                thread::spawn(move || handle(s, tx));
            }
            Err(e) => eprintln!("warning: accept failed: {e}"),
        }
    }
}

/// Register with the central loop; `None` once it has stopped.
fn open(tx: &Sender<Inbound>) -> Option<(ConnId, Receiver<Outbound>)> {
    let (out_tx, out_rx) = mpsc::sync_channel(OUTBOUND_QUEUE);
    let (reply_tx, reply_rx) = mpsc::channel();
    tx.send(Inbound::Open {
        out: out_tx,
        reply: reply_tx,
    })
    .ok()?;
    let id = reply_rx.recv().ok()?;
    Some((id, out_rx))
}

fn ws_connection(stream: TcpStream, tx: Sender<Inbound>) {
    let check_path = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() == "/ws" {
            Ok(resp)
        } else {
            let mut err = ErrorResponse::new(Some("not found".into()));
            *err.status_mut() = http::StatusCode::NOT_FOUND;
            Err(err)
        }
    };
    let Ok(mut ws) = tungstenite::accept_hdr(stream, check_path) else {
        return;
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let Some((id, out_rx)) = open(&tx) else {
        return;
    };
    'conn: loop {
        loop {
            match out_rx.try_recv() {
                Ok(Outbound::Frame(f)) => {
                    if ws.send(Message::text(f)).is_err() {
                        break 'conn;
                    }
                }
                Ok(Outbound::Close) | Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'conn;
                }
                Err(TryRecvError::Empty) => break,
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if tx.send(Inbound::Frame(id, t.as_bytes().to_vec())).is_err() {
                    break;
                }
            }
            Ok(Message::Binary(b)) => {
                if tx.send(Inbound::Frame(id, b.to_vec())).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
    let _ = tx.send(Inbound::Closed(id));
}

fn tcp_connection(stream: TcpStream, tx: Sender<Inbound>) {
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let Some((id, out_rx)) = open(&tx) else {
        return;
    };
    thread::spawn(move || {
        let mut w = write_half;
        for msg in out_rx {
            match msg {
                Outbound::Frame(f) => {
                    if w.write_all(f.as_bytes()).and_then(|_| w.write_all(b"\n")).is_err() {
                        break;
                    }
                }
                Outbound::Close => break,
            }
        }
        let _ = w.shutdown(std::net::Shutdown::Both);
    });
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    loop {
        line.clear();
        // One byte over the limit is enough for the server to reject it.
        let limit = (MAX_FRAME_BYTES + 2) as u64;
        match (&mut reader).take(limit).read_until(b'\n', &mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) => {}
        }
        let complete = line.last() == Some(&b'\n');
        while matches!(line.last(), Some(b'\n' | b'\r')) {
            line.pop();
        }
        if line.is_empty() {
            continue;
        }
        if tx.send(Inbound::Frame(id, line.clone())).is_err() || !complete {
            break;
        }
    }
    let _ = tx.send(Inbound::Closed(id));
}
