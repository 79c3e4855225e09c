//! Byte channels carrying telemetry or controller traffic.

use std::io;
use std::path::Path;

use async_trait::async_trait;
use tokio::io::{AsyncReadExt, AsyncWriteExt, DuplexStream};
use tokio::net::TcpStream;

#[async_trait]
pub trait ByteChannel: Send {
    /// Reads the next chunk. An empty chunk means end of stream.
    async fn read_chunk(&mut self) -> io::Result<Vec<u8>>;
    async fn write_chunk(&mut self, bytes: &[u8]) -> io::Result<()>;
}

const READ_CHUNK: usize = 256;

async fn read_some<R: AsyncReadExt + Unpin>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; READ_CHUNK];
    let n = r.read(&mut buf).await?;
    buf.truncate(n);
    Ok(buf)
}

/// One end of an in-memory pipe.
pub struct PipeChannel(DuplexStream);

/// Creates a connected pair of in-memory channels.
pub fn pipe() -> (PipeChannel, PipeChannel) {
    let (a, b) = tokio::io::duplex(4096);
    (PipeChannel(a), PipeChannel(b))
}

#[async_trait]
impl ByteChannel for PipeChannel {
    async fn read_chunk(&mut self) -> io::Result<Vec<u8>> {
        read_some(&mut self.0).await
    }

    async fn write_chunk(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.0.write_all(bytes).await?;
        self.0.flush().await
    }
}

pub struct TcpChannel(TcpStream);

impl TcpChannel {
    pub async fn connect(addr: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        Ok(Self(stream))
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        Self(stream)
    }
}

#[async_trait]
impl ByteChannel for TcpChannel {
    async fn read_chunk(&mut self) -> io::Result<Vec<u8>> {
        read_some(&mut self.0).await
    }

    async fn write_chunk(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.0.write_all(bytes).await?;
        self.0.flush().await
    }
}

/// Replays a recorded byte capture in fixed-size chunks; writes are discarded.
pub struct FileChannel {
    data: Vec<u8>,
    pos: usize,
    chunk: usize,
}

impl FileChannel {
    pub fn open(path: &Path, chunk: usize) -> io::Result<Self> {
        Ok(Self::from_bytes(std::fs::read(path)?, chunk))
    }

    pub fn from_bytes(data: Vec<u8>, chunk: usize) -> Self {
        Self {
            data,
            pos: 0,
            chunk: chunk.max(1),
        }
    }
}

#[async_trait]
impl ByteChannel for FileChannel {
    async fn read_chunk(&mut self) -> io::Result<Vec<u8>> {
        let end = (self.pos + self.chunk).min(self.data.len());
        let out = self.data[self.pos..end].to_vec();
        self.pos = end;
        Ok(out)
    }

    async fn write_chunk(&mut self, _bytes: &[u8]) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{encode_packet, Deframer, GeneralPacket};

    #[tokio::test]
    async fn pipe_carries_frames() {
        let (mut a, mut b) = pipe();
        let p = GeneralPacket {
            heart_rate_bpm: 74,
            battery_pct: 50,
            ..Default::default()
        };
        a.write_chunk(&encode_packet(&p).unwrap()).await.unwrap();
        drop(a);
        let mut d = Deframer::new();
        let mut got = Vec::new();
        loop {
            let chunk = b.read_chunk().await.unwrap();
            if chunk.is_empty() {
                break;
            }
            got.extend(d.feed(&chunk));
        }
        assert_eq!(got, vec![p]);
    }

    #[tokio::test]
    async fn file_channel_chunks_then_eof() {
        let mut f = FileChannel::from_bytes(vec![1, 2, 3, 4, 5], 2);
        assert_eq!(f.read_chunk().await.unwrap(), vec![1, 2]);
        assert_eq!(f.read_chunk().await.unwrap(), vec![3, 4]);
        assert_eq!(f.read_chunk().await.unwrap(), vec![5]);
        assert!(f.read_chunk().await.unwrap().is_empty());
    }
}
