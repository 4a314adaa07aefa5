use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use preflearn_service::{prepare_log_dir, router, AppState};

#[derive(Parser)]
#[command(
    name = "preflearn-server",
    version,
    about = "HTTP session API for live preference elicitation"
)]
struct Args {
    #[arg(long, default_value_t = 8722)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Directory served at `/` for paths outside the API, e.g. a UI bundle.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Directory for per-session JSON-lines event logs.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(dir) = &args.log {
        if let Err(e) = prepare_log_dir(dir) {
            eprintln!("error: cannot create log directory {}: {e}", dir.display());
            return ExitCode::FAILURE;
        }
    }
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            eprintln!("error: static directory {} does not exist", dir.display());
            return ExitCode::FAILURE;
        }
    }
    let app = router(AppState::new(args.log.clone()), args.static_dir.clone());
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {addr}: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!("listening on http://{addr}");
    if let Err(e) = axum::serve(listener, app).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
