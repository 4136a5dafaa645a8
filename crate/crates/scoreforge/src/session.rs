//! Live session service: a websocket endpoint relaying snapshots from the
//! engine to every client and triggers and transport commands back.

use std::collections::BTreeMap;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender, TrySendError};
use scoreforge_core::compile::{compile, ConstraintGraph};
use scoreforge_core::dsp::AudioClip;
use scoreforge_core::scheduler::{EngineError, StateSnapshot};
use scoreforge_core::score::{ObjectId, Score};
use tungstenite::{Message, WebSocket};

use crate::protocol::{decode_client, encode, ClientMessage, Hello, ServerMessage, Snapshot, TransportAction};
use crate::realtime::{run_realtime, Inputs, RealtimeConfig, RealtimeError, RealtimeRun, Transport};

const CLIENT_QUEUE: usize = 4096;
const TRIGGER_QUEUE: usize = 256;
const READ_POLL: Duration = Duration::from_millis(2);

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub realtime: RealtimeConfig,
    /// Wait for a transport start before the first tick.
    pub start_paused: bool,
    /// Return as soon as the score completes instead of serving the final
    /// state until stopped.
    pub exit_on_complete: bool,
}

/// Binds the service socket. A busy port surfaces here.
pub fn bind(addr: SocketAddr) -> io::Result<TcpListener> {
    TcpListener::bind(addr)
}

struct Hub {
    graph: ConstraintGraph,
    hello: Arc<str>,
    state: Mutex<HubState>,
}

struct HubState {
    clients: Vec<Sender<Arc<str>>>,
    latest: Option<StateSnapshot>,
    running: bool,
}

impl Hub {
    fn encode_latest(&self, st: &HubState) -> Option<Arc<str>> {
        st.latest
            .as_ref()
            .map(|s| encode(&ServerMessage::Snapshot(Snapshot::new(s, &self.graph, st.running))).into())
    }

    fn publish(&self, snapshot: Option<StateSnapshot>, running: bool) {
        let mut st = self.state.lock().expect("hub lock");
        if let Some(s) = snapshot {
            st.latest = Some(s);
        }
        st.running = running;
        let Some(msg) = self.encode_latest(&st) else { return };
        st.clients.retain(|c| !matches!(c.try_send(Arc::clone(&msg)), Err(TrySendError::Disconnected(_))));
    }

    fn subscribe(&self) -> (Receiver<Arc<str>>, Vec<Arc<str>>) {
        let (tx, rx) = bounded(CLIENT_QUEUE);
        let mut st = self.state.lock().expect("hub lock");
        let mut first = vec![Arc::clone(&self.hello)];
        first.extend(self.encode_latest(&st));
        st.clients.push(tx);
        (rx, first)
    }
}

/// Serves one score. Returns the run once the score completes (with
/// `exit_on_complete`) or the transport is stopped.
pub fn serve(
    listener: TcpListener,
    score: &Score,
    sources: &BTreeMap<ObjectId, AudioClip>,
    config: ServeConfig,
    transport: Arc<Transport>,
) -> Result<RealtimeRun, RealtimeError> {
    let graph = compile(score).map_err(EngineError::from)?;
    let hello = Hello::new(score, &graph, config.realtime.engine.policy);
    let hub = Arc::new(Hub {
        graph,
        hello: encode(&ServerMessage::Hello(hello)).into(),
        state: Mutex::new(HubState {
            clients: Vec::new(),
            latest: None,
            running: !config.start_paused,
        }),
    });
    if config.start_paused {
        transport.pause();
    } else {
        transport.start();
    }

    let (trigger_tx, trigger_rx) = bounded::<String>(TRIGGER_QUEUE);
    let (snap_tx, snap_rx) = bounded::<StateSnapshot>(1024);
    let done = Arc::new(AtomicBool::new(false));

    let relay = {
        let hub = Arc::clone(&hub);
        let transport = Arc::clone(&transport);
        thread::Builder::new()
            .name("relay".into())
            .spawn(move || {
                for s in snap_rx {
                    hub.publish(Some(s), transport.is_running());
                }
            })
            .expect("spawn relay")
    };
    let acceptor = {
        let hub = Arc::clone(&hub);
        let transport = Arc::clone(&transport);
        let done = Arc::clone(&done);
        listener.set_nonblocking(true)?;
        thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, hub, trigger_tx, transport, done))
            .expect("spawn acceptor")
    };

    let mut rt = config.realtime.clone();
    rt.stop_when_stalled = false;
    let inputs = Inputs {
        triggers: trigger_rx,
        script: Vec::new(),
        snapshots: Some(snap_tx),
    };
    let result = run_realtime(score, sources, rt, inputs, Arc::clone(&transport));
    let _ = relay.join();
    if result.is_ok() && !config.exit_on_complete {
        while !transport.stop_requested() {
            thread::sleep(Duration::from_millis(10));
        }
    }
    done.store(true, Ordering::SeqCst);
    let _ = acceptor.join();
    result
}

fn accept_loop(
    listener: TcpListener,
    hub: Arc<Hub>,
    triggers: Sender<String>,
    transport: Arc<Transport>,
    done: Arc<AtomicBool>,
) {
    let mut clients = Vec::new();
    while !done.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let hub = Arc::clone(&hub);
                let triggers = triggers.clone();
                let transport = Arc::clone(&transport);
                let done = Arc::clone(&done);
                clients.push(thread::spawn(move || {
                    let _ = client_loop(stream, &hub, &triggers, &transport, &done);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn send(ws: &mut WebSocket<TcpStream>, text: &str) -> tungstenite::Result<()> {
    ws.send(Message::text(text.to_string()))
}

fn client_loop(
    stream: TcpStream,
    hub: &Hub,
    triggers: &Sender<String>,
    transport: &Transport,
    done: &AtomicBool,
) -> tungstenite::Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.get_mut().set_read_timeout(Some(READ_POLL))?;
    let (outbox, first) = hub.subscribe();
    for m in first {
        send(&mut ws, &m)?;
    }
    loop {
        if done.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        while let Ok(m) = outbox.try_recv() {
            send(&mut ws, &m)?;
        }
        match ws.read() {
            Ok(Message::Text(frame)) => {
                for msg in decode_client(frame.as_ref()) {
                    match msg {
                        Ok(ClientMessage::Trigger { interactive_id }) => {
                            if triggers.send(interactive_id).is_err() {
                                let m = ServerMessage::Error {
                                    message: "session completed; trigger ignored".into(),
                                };
                                send(&mut ws, &encode(&m))?;
                            }
                        }
                        Ok(ClientMessage::Transport { action }) => {
                            match action {
                                TransportAction::Start => transport.start(),
                                TransportAction::Stop => transport.pause(),
                            }
                            hub.publish(None, transport.is_running());
                        }
                        Err(e) => send(&mut ws, &encode(&ServerMessage::Error { message: e }))?,
                    }
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
}
