export type GetUserMedia = (constraints: MediaStreamConstraints) => Promise<MediaStream>;

export function defaultGetUserMedia(): GetUserMedia | undefined {
  if (typeof navigator === 'undefined' || !navigator.mediaDevices?.getUserMedia) {
    return undefined;
  }
  return navigator.mediaDevices.getUserMedia.bind(navigator.mediaDevices);
}

export async function startCamera(video: HTMLVideoElement, getUserMedia: GetUserMedia): Promise<MediaStream> {
  // Rear camera preferred: the subject is a tree, not the user.
  const stream = await getUserMedia({
    audio: false,
    video: { facingMode: 'environment' },
  });
  video.srcObject = stream;
  // play() is unimplemented in some test DOMs and can be interrupted
  // by a quick teardown; neither should break capture.
  try {
    await video.play();
  } catch {
    // ignored
  }
  return stream;
}

export function stopCamera(stream: MediaStream | null): void {
  if (!stream) {
    return;
  }
  for (const track of stream.getTracks()) {
    track.stop();
  }
}

/**
 * Grab the current viewfinder frame as a JPEG blob. The canvas takes
 * the video's own pixel dimensions, so portrait streams stay portrait.
 */
export function captureFrame(video: HTMLVideoElement): Promise<Blob> {
  const width = video.videoWidth;
  const height = video.videoHeight;
  if (width <= 0 || height <= 0) {
    return Promise.reject(new Error('camera is not ready yet'));
  }
  const canvas = document.createElement('canvas');
  canvas.width = width;
  canvas.height = height;
  const ctx = canvas.getContext('2d');
  if (!ctx) {
    return Promise.reject(new Error('camera frame unavailable'));
  }
  ctx.drawImage(video, 0, 0, width, height);
  return new Promise<Blob>((resolve, reject) => {
    canvas.toBlob((blob) => {
      if (blob) {
        resolve(blob);
      } else {
        reject(new Error('camera frame unavailable'));
      }
    }, 'image/jpeg', 0.92);
  });
}
