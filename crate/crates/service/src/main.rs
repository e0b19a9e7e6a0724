use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use litrec_service::{router, ServiceState};

/// Serve recommendations from a prebuilt index.
#[derive(Parser)]
#[command(name = "litrec-serve", version)]
struct Args {
    /// Index directory written by `litrec build`.
    #[arg(long, env = "LITREC_INDEX")]
    index: PathBuf,
    /// Usage log; without it only content-based entries are served.
    #[arg(long, env = "LITREC_USAGE")]
    usage: Option<PathBuf>,
    #[arg(long, env = "LITREC_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = "LITREC_PORT", default_value_t = 8080)]
    port: u16,
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let state = match ServiceState::load(&args.index, args.usage.as_deref()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("litrec-serve: {e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!(
        "litrec-serve: {} documents, {} frequent readers, listening on {}:{}",
        state.index.manifest.doc_count,
        state.readership.readers().len(),
        args.bind,
        args.port
    );
    let listener = match tokio::net::TcpListener::bind((args.bind, args.port)).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("litrec-serve: cannot bind {}:{}: {e}", args.bind, args.port);
            return ExitCode::FAILURE;
        }
    };
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match axum::serve(listener, router(Arc::new(state))).with_graceful_shutdown(shutdown).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("litrec-serve: {e}");
            ExitCode::FAILURE
        }
    }
}
